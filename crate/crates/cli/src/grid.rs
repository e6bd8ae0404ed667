//! Parameter grid specs: `lo..hi` (unit step), `lo..hi:step`, or `a,b,c`.
//! A `method=` prefix restricts a spec to one method.

use std::collections::BTreeMap;

use crowdclose::Method;

pub fn parse(spec: &str) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    let values = if let Some((lo, rest)) = spec.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (hi, number(step)?),
            None => (rest, 1.0),
        };
        let (lo, hi) = (number(lo)?, number(hi)?);
        if step <= 0.0 {
            return Err(format!("grid `{spec}`: step must be positive"));
        }
        if hi < lo {
            return Err(format!("grid `{spec}`: upper bound below lower bound"));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        // rounding keeps 0.1-style steps free of accumulated drift
        (0..count)
            .map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9)
            .collect()
    } else {
        spec.split(',').map(number).collect::<Result<Vec<_>, _>>()?
    };
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(format!("grid `{spec}` must be strictly increasing"));
    }
    Ok(values)
}

fn number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("bad grid value `{s}`"))
}

/// Resolves `--grid` flags into one grid per method. An unprefixed spec applies
/// to every method without its own; methods with neither use their default grid.
pub fn resolve(methods: &[Method], specs: &[String]) -> Result<BTreeMap<Method, Vec<f64>>, String> {
    let mut shared = None;
    let mut own = BTreeMap::new();
    for spec in specs {
        match spec.split_once('=') {
            Some((m, g)) => {
                let m: Method = m.parse().map_err(|e| format!("{e}"))?;
                if !methods.contains(&m) {
                    return Err(format!("grid given for `{m}`, which is not being run"));
                }
                own.insert(m, parse(g)?);
            }
            None => shared = Some(parse(spec)?),
        }
    }
    Ok(methods
        .iter()
        .map(|&m| {
            let grid = own
                .get(&m)
                .or(shared.as_ref())
                .cloned()
                .unwrap_or_else(|| m.default_grid());
            (m, grid)
        })
        .collect())
}
