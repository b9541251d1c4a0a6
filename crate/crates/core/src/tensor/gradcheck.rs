use super::{ParamId, ParameterStore, Tape, Var};
use crate::error::{Error, Result};

/// Below this magnitude central differences in `f64` cannot resolve a
/// derivative to 1e-4 relative accuracy (round-off is ~1e-11 at step 1e-5).
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst entry.
    pub worst_values: (f64, f64),
    pub checked: usize,
}

/// Compares tape gradients of `loss_fn` with central differences.
///
/// The relative error of one entry is
/// `|analytic - numeric| / max(|analytic|, |numeric|, REL_FLOOR)`; the
/// maximum over all entries of all parameters is reported. `loss_fn` must be
/// deterministic: a tape that applied dropout is rejected.
pub fn grad_check<F>(store: &mut ParameterStore, step: f64, loss_fn: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    if step.is_nan() || step <= 0.0 {
        return Err(Error::invalid(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }

    let analytic = {
        let mut tape = Tape::new(store);
        let loss = loss_fn(&mut tape)?;
        if tape.is_stochastic() {
            return Err(Error::invalid(
                "grad_check needs a deterministic function (dropout enabled)",
            ));
        }
        let grads = tape.backward(loss)?;
        store
            .ids()
            .map(|id| grads.get(store, id).into_data())
            .collect::<Vec<_>>()
    };

    let eval = |store: &ParameterStore| -> Result<f64> {
        let mut tape = Tape::inference(store);
        let loss = loss_fn(&mut tape)?;
        Ok(tape.value(loss).item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        checked: 0,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for (j, &exact) in analytic[id.index()].iter().enumerate() {
            let original = store.get(id).data()[j];
            store.get_mut(id).data_mut()[j] = original + step;
            let plus = eval(store)?;
            store.get_mut(id).data_mut()[j] = original - step;
            let minus = eval(store)?;
            store.get_mut(id).data_mut()[j] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let denom = exact.abs().max(numeric.abs()).max(REL_FLOOR);
            let rel = (exact - numeric).abs() / denom;
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.name(id).to_string(), j));
                report.worst_values = (exact, numeric);
            }
        }
    }
    Ok(report)
}
