//! Three operations for the static page in `www/`, all on a synthetic
//! design with a rapidly decaying spectrum: the sampling distribution of a
//! scheme, the error of every scheme as the sketch grows, and the error
//! trace of the two-step solver.
//!
//! The `*_js` exports wrap plain functions that run (and are tested) natively.

use hdridge::datagen::gen_example1;
use hdridge::experiment::{solve_with_scheme, SolveParams};
use hdridge::linalg::thin_svd;
use hdridge::rng::derive_seed;
use hdridge::sampling::{
    probs_coefficient_weighted, probs_column, probs_leverage, probs_ridge_leverage, probs_rsis, ProbabilityVector,
    Scheme,
};
use hdridge::solvers::{pilot_preconditioner, ridge_exact, two_step_with, IterativeConfig, ProblemInstance};
use hdridge::verify::{estimation_error, median};
use hdridge::{Error, Result};
use wasm_bindgen::prelude::*;

/// Methods compared by [`error_curve`], in output order.
pub const CURVE_METHODS: [Scheme; 6] = [Scheme::Uni, Scheme::Col, Scheme::Lev, Scheme::Rlev, Scheme::Opl, Scheme::Nopl];

/// Shared inputs of every operation.
#[derive(Debug, Clone, Copy)]
pub struct Design {
    pub n: usize,
    pub p: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Design {
    fn instance(&self) -> Result<ProblemInstance> {
        Ok(gen_example1(self.n, self.p, self.lambda, derive_seed(self.seed, "data"))?.instance)
    }
}

/// Sampling distribution of `scheme` over the `p` features. NOPL uses a
/// pilot of size `r0`; OPL and RSIS use the exact solution.
pub fn probabilities(design: Design, scheme: Scheme, r0: usize) -> Result<Vec<f64>> {
    let inst = design.instance()?;
    let a = inst.a();
    let pv: ProbabilityVector = match scheme {
        Scheme::Uni => ProbabilityVector::uniform(design.p)?,
        Scheme::Col => probs_column(a)?,
        Scheme::Lev => probs_leverage(&thin_svd(a)?)?,
        Scheme::Rlev => probs_ridge_leverage(&thin_svd(a)?, design.lambda)?,
        Scheme::Opl => probs_coefficient_weighted(a, ridge_exact(&inst)?.beta.as_slice(), Scheme::Opl)?,
        Scheme::Rsis => probs_rsis(ridge_exact(&inst)?.beta.as_slice())?,
        Scheme::Nopl => {
            let pilot = pilot_preconditioner(&inst, r0, derive_seed(design.seed, "pilot"))?;
            let beta_tilde = a.tr_mul(&(&pilot.c * inst.y()));
            probs_coefficient_weighted(a, beta_tilde.as_slice(), Scheme::Nopl)?
        }
        Scheme::Custom => return Err(Error::InvalidArgument("CUSTOM has no built-in distribution".into())),
    };
    Ok(pv.as_slice().to_vec())
}

/// Median relative estimation error over `reps` sketches, laid out
/// method-major: entry `k * rs.len() + i` is method `CURVE_METHODS[k]` at
/// sketch size `rs[i]`. Sizes above `p` yield NaN.
pub fn error_curve(design: Design, rs: &[usize], m: usize, r0: usize, reps: usize) -> Result<Vec<f64>> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    let inst = design.instance()?;
    let exact = ridge_exact(&inst)?;
    let mut out = Vec::with_capacity(CURVE_METHODS.len() * rs.len());
    for scheme in CURVE_METHODS {
        for &r in rs {
            if r > design.p || r0 > design.p {
                out.push(f64::NAN);
                continue;
            }
            let mut errors = Vec::with_capacity(reps);
            for rep in 0..reps {
                let params = SolveParams {
                    r,
                    r0: Some(r0),
                    m,
                    seed: derive_seed(design.seed, &format!("curve/{scheme}/r={r}/rep={rep}")),
                    mixing_floor: 0.0,
                };
                let sol = solve_with_scheme(&inst, scheme, &params)?;
                errors.push(estimation_error(&sol.beta, &exact.beta)?);
            }
            out.push(median(&errors));
        }
    }
    Ok(out)
}

/// Relative estimation error after each of the `m` two-step iterations.
pub fn decay_trace(design: Design, r: usize, r0: usize, m: usize) -> Result<Vec<f64>> {
    let inst = design.instance()?;
    let exact = ridge_exact(&inst)?;
    let cfg = IterativeConfig::new(r, r0, m, derive_seed(design.seed, "trace"));
    let (_, trace) = two_step_with(&inst, &cfg, Some(&exact), None)?;
    trace
        .errors()
        .ok_or_else(|| Error::InvalidArgument("trace carries no errors".into()))
}

fn js_err(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn design(n: u32, p: u32, lambda: f64, seed: u32) -> Design {
    Design {
        n: n as usize,
        p: p as usize,
        lambda,
        seed: u64::from(seed),
    }
}

#[wasm_bindgen(js_name = methodNames)]
pub fn method_names_js() -> String {
    CURVE_METHODS.map(Scheme::as_str).join(",")
}

#[wasm_bindgen(js_name = probabilities)]
pub fn probabilities_js(n: u32, p: u32, lambda: f64, seed: u32, scheme: &str, r0: u32) -> std::result::Result<Vec<f64>, JsError> {
    let scheme: Scheme = scheme.parse().map_err(js_err)?;
    probabilities(design(n, p, lambda, seed), scheme, r0 as usize).map_err(js_err)
}

#[wasm_bindgen(js_name = errorCurve)]
pub fn error_curve_js(
    n: u32,
    p: u32,
    lambda: f64,
    seed: u32,
    rs: Vec<u32>,
    m: u32,
    r0: u32,
    reps: u32,
) -> std::result::Result<Vec<f64>, JsError> {
    let rs: Vec<usize> = rs.into_iter().map(|r| r as usize).collect();
    error_curve(design(n, p, lambda, seed), &rs, m as usize, r0 as usize, reps as usize).map_err(js_err)
}

#[wasm_bindgen(js_name = decayTrace)]
pub fn decay_trace_js(n: u32, p: u32, lambda: f64, seed: u32, r: u32, r0: u32, m: u32) -> std::result::Result<Vec<f64>, JsError> {
    decay_trace(design(n, p, lambda, seed), r as usize, r0 as usize, m as usize).map_err(js_err)
}
