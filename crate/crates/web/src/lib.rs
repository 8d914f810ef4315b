//! wasm-bindgen surface for the browser demo in `www/`.
//!
//! Every export returns a flat `Float64Array`; the page knows the stride.

use exchange_cutoff::laws::analytic_constants;
use exchange_cutoff::observables::{coupling_curves, CouplingSpec};
use exchange_cutoff::oracle::{schedule, theorem_profile};
use exchange_cutoff::{seed_stream, Configuration, Law, ModelKind};
use wasm_bindgen::prelude::*;

/// Cap on `n * frames` for trajectories and `n * replicas` for profiles, to keep the tab responsive.
const MAX_WORK: u64 = 50_000_000;

fn parse_law(spec: &str) -> Result<Law, String> {
    let parsed = spec.parse().map_err(|e| format!("{e}"))?;
    Law::new(parsed).map_err(|e| e.to_string())
}

fn parse_model(name: &str) -> Result<ModelKind, String> {
    name.parse().map_err(|e| format!("{e}"))
}

/// `[h, s², r]` for each `α` of `Beta(α, α)`.
pub fn entropy_curve_native(alphas: &[f64]) -> Result<Vec<f64>, String> {
    let mut out = Vec::with_capacity(3 * alphas.len());
    for &a in alphas {
        let c = analytic_constants(&Law::beta(a).map_err(|e| e.to_string())?);
        out.extend([c.h, c.s2, c.r]);
    }
    Ok(out)
}

/// `[h, s², r, E[X²], t_ent, t_w]` for a law at size `n`.
pub fn law_summary_native(law: &str, n: usize) -> Result<Vec<f64>, String> {
    let law = parse_law(law)?;
    let c = analytic_constants(&law);
    let sch = schedule(n, &c).map_err(|e| e.to_string())?;
    Ok(vec![c.h, c.s2, c.r, c.ex2, sch.t_ent, sch.t_w])
}

/// Per `β`: `[t, W₁ mean, W₁ stderr, theorem profile]`. `β` must be ascending.
pub fn cutoff_profile_native(
    model: &str,
    law: &str,
    n: usize,
    betas: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let model = parse_model(model)?;
    let law = parse_law(law)?;
    if (n as u64).saturating_mul(replicas) > MAX_WORK {
        return Err(format!("n * replicas above {MAX_WORK}"));
    }
    let c = analytic_constants(&law);
    let sch = schedule(n, &c).map_err(|e| e.to_string())?;
    let ts: Vec<u64> = betas.iter().map(|&b| sch.steps_at(b)).collect();
    if ts.windows(2).any(|w| w[0] >= w[1]) {
        return Err("betas must map to strictly increasing step counts".into());
    }
    let spec = CouplingSpec::new(model, &law, n, replicas, seed);
    let (plain, _) = coupling_curves(&spec, &ts).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(4 * betas.len());
    for ((&b, &t), s) in betas.iter().zip(&ts).zip(&plain) {
        out.extend([t as f64, s.value, s.stderr, theorem_profile(b, &c)]);
    }
    Ok(out)
}

/// `frames` snapshots of `n` energies from `δ₀`, `steps` exchanges apart. Frame 0 is the start.
pub fn trajectory_native(
    model: &str,
    law: &str,
    n: usize,
    steps: u64,
    frames: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let model = parse_model(model)?;
    let law = parse_law(law)?;
    if (n as u64).saturating_mul(frames as u64) > MAX_WORK || steps.saturating_mul(frames as u64) > MAX_WORK {
        return Err(format!("trajectory larger than {MAX_WORK}"));
    }
    let mut cfg = Configuration::dirac(model, n, 0).map_err(|e| e.to_string())?;
    let mut rng = seed_stream(seed, 0);
    let mut out = Vec::with_capacity(n * frames);
    for f in 0..frames {
        if f > 0 {
            cfg.run(&law, steps, &mut rng);
        }
        out.extend_from_slice(cfg.energy());
    }
    Ok(out)
}

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = entropyCurve)]
pub fn entropy_curve(alphas: Vec<f64>) -> Result<Vec<f64>, JsError> {
    js(entropy_curve_native(&alphas))
}

#[wasm_bindgen(js_name = lawSummary)]
pub fn law_summary(law: &str, n: usize) -> Result<Vec<f64>, JsError> {
    js(law_summary_native(law, n))
}

#[wasm_bindgen(js_name = cutoffProfile)]
pub fn cutoff_profile(
    model: &str,
    law: &str,
    n: usize,
    betas: Vec<f64>,
    replicas: u32,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    js(cutoff_profile_native(model, law, n, &betas, replicas as u64, seed as u64))
}

#[wasm_bindgen]
pub fn trajectory(model: &str, law: &str, n: usize, steps: u32, frames: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    js(trajectory_native(model, law, n, steps as u64, frames, seed as u64))
}
