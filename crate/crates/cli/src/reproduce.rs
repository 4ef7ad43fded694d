//! Reference experiments: run a bundled scenario end to end and compare the
//! refitted values against the bundled reference numbers.

use crate::config;
use crate::output::DataFormat;
use crate::scenario::{run_scenario, RunArtifacts, ScenarioError};
use serde_json::Value;
use std::path::Path;

pub const KNOWN_IDS: &[&str] = &["fig2", "fig3a", "fig3b", "fig4b", "fig4c"];

#[derive(Debug, thiserror::Error)]
pub enum ReproduceError {
    #[error("unknown id {0:?}; known ids: fig2, fig3a, fig3b, fig4b, fig4c")]
    UnknownId(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// One comparison row of a reproduce run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Row {
    pub name: String,
    pub reference: f64,
    pub simulated: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Row {
    fn new(name: &str, reference: f64, simulated: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            reference,
            simulated,
            tolerance,
            pass: (simulated - reference).abs() <= tolerance,
        }
    }

    /// A one-sided check: simulated must be at least `reference`.
    fn at_least(name: &str, reference: f64, simulated: f64) -> Self {
        Self {
            name: name.into(),
            reference,
            simulated,
            tolerance: f64::NAN,
            pass: simulated >= reference,
        }
    }
}

fn run_bundled(
    name: &str,
    seed: Option<u64>,
    outdir: &Path,
) -> Result<RunArtifacts, ReproduceError> {
    let text = config::bundled(name).expect("bundled config");
    Ok(run_scenario(text, seed, outdir, DataFormat::Csv)?)
}

fn get(v: &Value, path: &[&str]) -> f64 {
    let mut cur = v;
    for p in path {
        cur = &cur[p];
    }
    cur.as_f64().unwrap_or(f64::NAN)
}

/// Run the scenario(s) behind a reference id and produce comparison rows.
pub fn reproduce(
    id: &str,
    seed: Option<u64>,
    outdir: &Path,
) -> Result<Vec<Row>, ReproduceError> {
    match id {
        "fig2" => {
            let xm = run_bundled("xm_saturation", seed, outdir)?;
            let xp = run_bundled("xp_saturation", seed, outdir)?;
            let xm_f = run_bundled("xm_pumping", seed, outdir)?;
            let xp_f = run_bundled("xp_pumping", seed, outdir)?;
            let gx_xp = get(&xp.results, &["gamma_x_per_ns"]);
            Ok(vec![
                Row::new("cyclicity XM", 11.6, get(&xm.results, &["cyclicity"]), 0.5),
                Row::new("cyclicity XP", 14.7, get(&xp.results, &["cyclicity"]), 0.5),
                Row::new("gamma_x XM (ns^-1)", 0.243, get(&xm.results, &["gamma_x_per_ns"]), 0.01),
                Row::new("gamma_x XP (ns^-1)", 0.158, gx_xp, 0.007),
                Row::new("1/e pumping time XP (ns)", 12.7, 2.0 / gx_xp, 0.6),
                Row::at_least(
                    "init fidelity XM (lower bound)",
                    0.986,
                    get(&xm_f.results, &["fidelity_lower_bound"]),
                ),
                Row::new(
                    "init fidelity XM",
                    0.991,
                    get(&xm_f.results, &["fidelity_lower_bound"]),
                    0.005,
                ),
                Row::new(
                    "init fidelity XP",
                    0.986,
                    get(&xp_f.results, &["fidelity_lower_bound"]),
                    0.005,
                ),
            ])
        }
        "fig3a" => {
            let run = run_bundled("xm_spectrum", seed, outdir)?;
            let r1 = get(&run.results, &["intensity_ratio_y1_x1"]);
            let r2 = get(&run.results, &["intensity_ratio_y2_x2"]);
            // reference ratios carry their own uncertainties (0.5, 0.6);
            // compare at 2x the combined scale against the bundled A = 21.1
            Ok(vec![
                Row::new("intensity ratio y1/x1", 21.8, r1, 2.0),
                Row::new("intensity ratio y2/x2", 20.3, r2, 2.0),
                Row::new(
                    "waveguide asymmetry A (mean ratio)",
                    21.1,
                    0.5 * (r1 + r2),
                    1.5,
                ),
            ])
        }
        "fig3b" => {
            let run = run_bundled("xm_transmission", seed, outdir)?;
            let dips = run.results["dips"].as_array().cloned().unwrap_or_default();
            let mut depths: Vec<(f64, f64, f64)> = dips
                .iter()
                .map(|d| {
                    (
                        get(d, &["depth"]),
                        get(d, &["fwhm_GHz"]),
                        get(d, &["center_GHz"]),
                    )
                })
                .collect();
            depths.sort_by(|a, b| b.0.total_cmp(&a.0));
            let deepest = depths.first().cloned().unwrap_or((f64::NAN, f64::NAN, 0.0));
            let shallowest = depths.last().cloned().unwrap_or((f64::NAN, f64::NAN, 0.0));
            Ok(vec![
                // dip amplitudes up to 39%: the deepest thermal-mixture dip
                Row::new("max transmission dip", 0.39, deepest.0, 0.08),
                // 0.66 GHz dip linewidth (1.35x natural)
                Row::new("dip FWHM (GHz)", 0.66, deepest.1, 0.07),
                // strong y/x asymmetry: deepest/shallowest dip ratio >> 1
                Row::at_least("y/x dip ratio", 10.0, deepest.0 / shallowest.0),
                // thermal mixture halves the pure-state dips (factor ~2)
                Row::new(
                    "thermal reduction factor",
                    2.0,
                    thermal_reduction_factor(seed, outdir)?,
                    0.25,
                ),
            ])
        }
        "fig4b" => {
            let red = run_bundled("xp_rabi_290", seed, outdir)?;
            let blue = run_bundled("xp_rabi_790", seed, outdir)?;
            let omega_red = get(&red.results, &["omega_mw_max_over_2pi_MHz"]);
            let f_red = get(&red.results, &["fringe_frequency_per_mW"]);
            let f_blue = get(&blue.results, &["fringe_frequency_per_mW"]);
            Ok(vec![
                Row::new("max Omega_MW/2pi (MHz)", 150.0, omega_red, 1.0),
                Row::new(
                    "fringe frequency ratio 290/790",
                    790.0 / 290.0,
                    f_red / f_blue,
                    0.15,
                ),
            ])
        }
        "fig4c" => {
            let run = run_bundled("xp_ramsey", seed, outdir)?;
            Ok(vec![Row::new(
                "T2* (ns)",
                21.4,
                get(&run.results, &["t2_star_ns"]),
                1.1,
            )])
        }
        other => Err(ReproduceError::UnknownId(other.into())),
    }
}

/// Depth ratio between the thermal-mixture and pure-state deepest dips,
/// which the thermal occupation reduces by about a factor 2.
fn thermal_reduction_factor(seed: Option<u64>, outdir: &Path) -> Result<f64, ReproduceError> {
    let text = config::bundled("xm_transmission").expect("bundled config");
    let pure = text.replace("populations = \"thermal\"", "populations = [1.0, 0.0]");
    let pure = pure.replace("prefix = \"xm_transmission\"", "prefix = \"xm_transmission_pure\"");
    let thermal_run = run_scenario(text, seed, outdir, DataFormat::Csv)?;
    let pure_run = run_scenario(&pure, seed, outdir, DataFormat::Csv)?;
    let deepest = |v: &Value| -> f64 {
        v["dips"]
            .as_array()
            .map(|a| {
                a.iter()
                    .map(|d| get(d, &["depth"]))
                    .fold(0.0f64, f64::max)
            })
            .unwrap_or(f64::NAN)
    };
    Ok(deepest(&pure_run.results) / deepest(&thermal_run.results))
}

pub fn render_table(rows: &[Row]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<36} {:>12} {:>12} {:>10}  {}\n",
        "quantity", "reference", "simulated", "tolerance", "status"
    ));
    for r in rows {
        let tol = if r.tolerance.is_nan() {
            ">=".to_string()
        } else {
            format!("{:.3}", r.tolerance)
        };
        out.push_str(&format!(
            "{:<36} {:>12.4} {:>12.4} {:>10}  {}\n",
            r.name,
            r.reference,
            r.simulated,
            tol,
            if r.pass { "ok" } else { "FAIL" }
        ));
    }
    out
}
