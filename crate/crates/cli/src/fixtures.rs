//! Instances bundled with the binary, addressed as `builtin:<name>`.

use mmw_sketch::sdp::{load_instance, parse_instance};
use mmw_sketch::SdpInstance;

use crate::error::CliResult;

/// `A_1 = diag(1, -1)`, `A_2 = diag(-1, 1)`; the saddle value is exactly 0.
pub const SYMMETRIC2: &str = include_str!("../fixtures/symmetric2.txt");
/// Random sparse instance with `n = 20`, `m = 10`, and unit width.
pub const RANDOM20: &str = include_str!("../fixtures/random20.txt");

pub const BUILTIN_PREFIX: &str = "builtin:";

pub fn builtin(name: &str) -> Option<&'static str> {
    match name {
        "symmetric2" => Some(SYMMETRIC2),
        "random20" => Some(RANDOM20),
        _ => None,
    }
}

/// Loads `builtin:<name>` or an instance file.
pub fn resolve_instance(source: &str) -> CliResult<SdpInstance> {
    match source.strip_prefix(BUILTIN_PREFIX) {
        Some(name) => {
            let text = builtin(name).ok_or_else(|| {
                crate::error::CliError::usage(format!(
                    "unknown builtin instance `{name}` (available: symmetric2, random20)"
                ))
            })?;
            Ok(parse_instance(text)?)
        }
        None => Ok(load_instance(source)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmw_sketch::linalg::DEFAULT_DENSE_LIMIT;
    use mmw_sketch::sdp::{format_instance, random_instance};
    use mmw_sketch::SeededRng;

    #[test]
    fn random20_matches_its_generator() {
        let inst = resolve_instance("builtin:random20").unwrap();
        let regenerated = random_instance(20, 10, 0.3, &mut SeededRng::new(20)).unwrap();
        assert_eq!(format_instance(&inst), format_instance(&regenerated));
        let omega = inst.width(DEFAULT_DENSE_LIMIT, &mut SeededRng::new(0)).unwrap().omega;
        assert!((omega - 1.0).abs() < 1e-12 && omega <= 1.0 + 1e-12);
    }

    #[test]
    fn symmetric2_is_the_diagonal_pair() {
        let inst = resolve_instance("builtin:symmetric2").unwrap();
        assert_eq!((inst.n(), inst.m()), (2, 2));
        assert_eq!(inst.dense_constraint(0).get(1, 1), -1.0);
        assert!(resolve_instance("builtin:nope").is_err());
    }
}
