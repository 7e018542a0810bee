use crate::SimError;

/// Time between the first crossings of 10 % and 90 % of the way from
/// `initial` to `target`, with linear interpolation between samples.
pub fn rising_time(t: &[f64], y: &[f64], initial: f64, target: f64) -> Result<f64, SimError> {
    let delta = target - initial;
    if delta == 0.0 || t.len() != y.len() {
        return Err(SimError::NoRise);
    }
    let crossing = |frac: f64| -> Option<f64> {
        let level = initial + frac * delta;
        let above = |v: f64| (v - level) * delta.signum() >= 0.0;
        if above(*y.first()?) {
            return Some(t[0]);
        }
        (1..y.len()).find(|&k| above(y[k])).map(|k| {
            let s = (level - y[k - 1]) / (y[k] - y[k - 1]);
            t[k - 1] + s * (t[k] - t[k - 1])
        })
    };
    match (crossing(0.1), crossing(0.9)) {
        (Some(a), Some(b)) => Ok(b - a),
        _ => Err(SimError::NoRise),
    }
}
