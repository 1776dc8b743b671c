//! Central finite-difference check of hand-derived gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NumericsError, ParamStore};

/// Finite-difference step for 64-bit values.
pub const FD_STEP: f64 = 1e-4;

/// Denominator floor of the relative error, so components whose true
/// gradient is numerically zero are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub tolerance: f64,
    /// Coordinates sampled per parameter; parameters smaller than this are checked exhaustively.
    pub samples_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            samples_per_param: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<CoordinateCheck>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the analytic gradients stored in `store` against central
/// differences of `loss_fn`. `loss_fn` must be deterministic.
pub fn check_gradients<F>(
    mut loss_fn: F,
    store: &ParamStore,
    opts: GradCheckOptions,
) -> Result<GradCheckReport, NumericsError>
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = store.clone();
    let mut report = GradCheckReport::default();
    for id in store.ids() {
        let len = store.value(id).len();
        let coords: Vec<usize> = if len <= opts.samples_per_param {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, opts.samples_per_param).into_vec();
            c.sort_unstable();
            c
        };
        for index in coords {
            let original = store.value(id)[index];
            probe.value_mut(id)[index] = original + FD_STEP;
            let plus = loss_fn(&probe);
            probe.value_mut(id)[index] = original - FD_STEP;
            let minus = loss_fn(&probe);
            probe.value_mut(id)[index] = original;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let analytic = store.grad(id)[index];
            let rel_error = relative_error(analytic, numeric);
            report.checked += 1;
            if rel_error > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel_error);
                report.worst = Some(CoordinateCheck {
                    param: store.meta(id).name.clone(),
                    index,
                    analytic,
                    numeric,
                    rel_error,
                });
            }
        }
    }
    match &report.worst {
        Some(w) if w.rel_error > opts.tolerance || !w.rel_error.is_finite() => {
            Err(NumericsError::GradientCheckFailed(Box::new(w.clone())))
        }
        _ => Ok(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_store() -> ParamStore {
        let mut store = ParamStore::new();
        let w = store.insert("w", &[3], vec![0.5, -1.5, 2.0]).unwrap();
        let b = store.insert("b", &[2], vec![0.25, 3.0]).unwrap();
        for id in [w, b] {
            let v = store.value(id).to_vec();
            store.grad_mut(id).copy_from_slice(&v);
        }
        store
    }

    fn half_norm(store: &ParamStore) -> f64 {
        store
            .ids()
            .flat_map(|id| store.value(id).to_vec())
            .map(|x| 0.5 * x * x)
            .sum()
    }

    #[test]
    fn quadratic_loss_passes_tightly() {
        let store = quadratic_store();
        let opts = GradCheckOptions {
            tolerance: 1e-8,
            ..Default::default()
        };
        let report = check_gradients(half_norm, &store, opts).unwrap();
        assert_eq!(report.checked, 5);
        assert!(report.max_rel_error < 1e-8);
    }

    #[test]
    fn corrupted_gradient_is_pinpointed() {
        let mut store = quadratic_store();
        let b = store.id("b").unwrap();
        store.grad_mut(b)[1] += 0.1;
        let err = check_gradients(half_norm, &store, GradCheckOptions::default()).unwrap_err();
        match err {
            NumericsError::GradientCheckFailed(w) => {
                assert_eq!(w.param, "b");
                assert_eq!(w.index, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
