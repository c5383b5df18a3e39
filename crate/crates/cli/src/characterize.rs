//! Sorter crosstalk with and without the fan-out, plus the element masks.

use oamdm_optics::export::{write_crosstalk_csv, write_mask};
use oamdm_optics::fanout::FanoutDesign;
use oamdm_optics::sorter::{element_phase_r1, element_phase_r2, PhaseMask};
use oamdm_optics::{design_fanout, CrosstalkReport, FanoutSpec, GridSpec, Sorter};
use serde::{Deserialize, Serialize};

use crate::bundle::{BundleWriter, Manifest, CONFIG};
use crate::config::ExperimentConfig;
use crate::error::Result;

pub const CROSSTALK_OFF: &str = "crosstalk_off.csv";
pub const CROSSTALK_ON: &str = "crosstalk_on.csv";
pub const SORTER_SUMMARY: &str = "sorter_summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkSummary {
    /// Mean over ordered neighbour pairs of the power one mode leaves in the
    /// window of an adjacent mode.
    pub mean_neighbor_overlap: f64,
    /// Mean over interior modes of the power in both neighbouring windows.
    pub mean_two_sided_leakage: f64,
    pub linearity_residual: f64,
    pub diagonally_dominant: bool,
    pub window_pitch_bins: f64,
}

impl From<&CrosstalkReport> for CrosstalkSummary {
    fn from(r: &CrosstalkReport) -> Self {
        Self {
            mean_neighbor_overlap: r.mean_neighbor_overlap,
            mean_two_sided_leakage: r.mean_two_sided_leakage,
            linearity_residual: r.linearity_residual,
            diagonally_dominant: r.is_diagonally_dominant(),
            window_pitch_bins: r.windows.pitch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub a_m: f64,
    pub b_m: f64,
    pub f_m: f64,
    pub spacing_m: f64,
    pub waist_m: f64,
    pub output_pitch_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SorterSummary {
    pub modes: usize,
    pub geometry: GeometrySummary,
    pub without_fanout: CrosstalkSummary,
    pub with_fanout: Option<CrosstalkSummary>,
    /// `with / without` for the neighbour overlap.
    pub reduction_ratio: Option<f64>,
    pub fanout: Option<FanoutDesign>,
}

#[derive(Debug, Clone)]
pub struct SorterOutcome {
    pub without_fanout: CrosstalkReport,
    pub with_fanout: Option<CrosstalkReport>,
    pub design: Option<FanoutDesign>,
    pub summary: SorterSummary,
}

/// Fan-out phase on the R2-plane grid; it varies along rows (the strip axis).
pub fn fanout_mask(spec: &FanoutSpec, grid: &GridSpec) -> PhaseMask {
    let n = grid.n;
    let mut phase = Vec::with_capacity(n * n);
    for row in 0..n {
        let p = spec.phase_at(grid.coord(row) / spec.period);
        phase.extend(std::iter::repeat_n(p, n));
    }
    PhaseMask {
        grid: *grid,
        phase,
        blocked: vec![false; n * n],
    }
}

/// Simulates every mode in `-l_max..=l_max`. The config must already be validated.
pub fn characterize(config: &ExperimentConfig) -> Result<SorterOutcome> {
    let setup = config.sorter.setup();
    let sorter = Sorter::new(setup)?;
    let design = if config.sorter.fanout {
        Some(design_fanout(
            config.sorter.copies,
            config.sorter.uniformity_tol,
            config.sorter.fanout_period(),
        )?)
    } else {
        None
    };
    let mut relays: Vec<Option<&FanoutSpec>> = vec![None];
    if let Some(d) = &design {
        relays.push(Some(&d.spec));
    }
    let mut reports = sorter.crosstalk(config.state.l_max, &relays)?.into_iter();
    let without_fanout = reports.next().expect("one report per relay setting");
    let with_fanout = reports.next();

    let summary = SorterSummary {
        modes: without_fanout.ells.len(),
        geometry: GeometrySummary {
            a_m: setup.geometry.a,
            b_m: setup.geometry.b,
            f_m: setup.geometry.f,
            spacing_m: setup.spacing,
            waist_m: setup.waist,
            output_pitch_m: setup.output_pitch(),
        },
        without_fanout: (&without_fanout).into(),
        with_fanout: with_fanout.as_ref().map(Into::into),
        reduction_ratio: with_fanout
            .as_ref()
            .map(|on| on.mean_neighbor_overlap / without_fanout.mean_neighbor_overlap),
        fanout: design.clone(),
    };
    Ok(SorterOutcome {
        without_fanout,
        with_fanout,
        design,
        summary,
    })
}

/// Validates, simulates and writes the sorter bundle into `output.directory`.
pub fn run_sorter_characterization(config: &ExperimentConfig) -> Result<(SorterOutcome, Manifest)> {
    config.validate()?;
    let outcome = characterize(config)?;
    let mut bundle = BundleWriter::create(&config.output.directory)?;
    bundle.write(CONFIG, config.to_toml_string()?.as_bytes())?;
    if config.output.wants("csv") {
        bundle.write_with(CROSSTALK_OFF, |b| write_crosstalk_csv(b, &outcome.without_fanout))?;
        if let Some(on) = &outcome.with_fanout {
            bundle.write_with(CROSSTALK_ON, |b| write_crosstalk_csv(b, on))?;
        }
    }
    if config.output.wants("json") {
        bundle.write_json(SORTER_SUMMARY, &outcome.summary)?;
    }

    let setup = config.sorter.setup();
    let out_grid = GridSpec {
        pitch: setup.output_pitch(),
        ..setup.grid
    };
    let mut masks = vec![
        ("masks/r1", element_phase_r1(&setup.geometry, &setup.grid)?, "R1 unwrapper phase (rad)"),
        ("masks/r2", element_phase_r2(&setup.geometry, &out_grid)?, "R2 phase corrector (rad)"),
    ];
    if let Some(d) = &outcome.design {
        masks.push(("masks/fanout", fanout_mask(&d.spec, &out_grid), "fan-out grating phase (rad)"));
    }
    std::fs::create_dir_all(bundle.path("masks")).map_err(|e| crate::error::CliError::io(bundle.path("masks"), e))?;
    for (stem, mask, desc) in &masks {
        write_mask(bundle.path(stem), mask, desc)?;
        bundle.track(&format!("{stem}.f32"))?;
        bundle.track(&format!("{stem}.json"))?;
    }

    let mut log = format!("{} {}\n", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    let s = &outcome.summary;
    log.push_str(&format!(
        "modes={} a={} b={} f={} spacing={}\n",
        s.modes, s.geometry.a_m, s.geometry.b_m, s.geometry.f_m, s.geometry.spacing_m
    ));
    log.push_str(&format!(
        "without fan-out: overlap={:.6} two_sided={:.6} dominant={}\n",
        s.without_fanout.mean_neighbor_overlap, s.without_fanout.mean_two_sided_leakage, s.without_fanout.diagonally_dominant
    ));
    if let (Some(on), Some(r)) = (&s.with_fanout, s.reduction_ratio) {
        log.push_str(&format!(
            "with fan-out: overlap={:.6} two_sided={:.6} dominant={} ratio={:.4}\n",
            on.mean_neighbor_overlap, on.mean_two_sided_leakage, on.diagonally_dominant, r
        ));
    }
    bundle.write("run.log", log.as_bytes())?;
    let manifest = bundle.finish("sorter")?;
    Ok((outcome, manifest))
}
