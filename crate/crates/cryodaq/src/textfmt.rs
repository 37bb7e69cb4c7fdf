//! The single text rendering rule for record triples, used system-wide.
//!
//! Every tool that prints records (archive text export, `xyp`, `xymon`)
//! goes through [`format_triple`]: each field is the shortest decimal
//! string that parses back to the identical `f64` (never more than 17
//! significant digits), fields are separated by a single space, lines are
//! LF-terminated. `parse_triple` inverts it exactly for finite values.

use std::fmt::Write as _;

/// Render one field. `0.0` prints as `0`, `1.0` as `1`, `0.1` as `0.1`.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

/// Render a record triple as one LF-terminated line.
pub fn format_triple(t: &[f64; 3]) -> String {
    let mut s = String::with_capacity(32);
    let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    s
}

/// Parse one line produced by [`format_triple`].
///
/// Returns `None` on anything but exactly three whitespace-separated
/// float fields.
pub fn parse_triple(line: &str) -> Option<[f64; 3]> {
    let mut it = line.split_ascii_whitespace();
    let a = it.next()?.parse().ok()?;
    let b = it.next()?.parse().ok()?;
    let c = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some([a, b, c])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_representables_render_short() {
        assert_eq!(format_triple(&[0.0, 1.0, 1.0]), "0 1 1\n");
        assert_eq!(format_triple(&[1.5, -2.0, 0.25]), "1.5 -2 0.25\n");
    }

    #[test]
    fn parse_rejects_wrong_arity() {
        assert!(parse_triple("1 2").is_none());
        assert!(parse_triple("1 2 3 4").is_none());
        assert!(parse_triple("a b c").is_none());
    }

    proptest! {
        // Lossless round trip on finite values: text -> parse is the
        // identity at the bit level.
        #[test]
        fn round_trip_is_identity(a in any::<f64>(), b in any::<f64>(), c in any::<f64>()) {
            prop_assume!(a.is_finite() && b.is_finite() && c.is_finite());
            let line = format_triple(&[a, b, c]);
            let back = parse_triple(&line).expect("own output must parse");
            prop_assert_eq!(a.to_bits(), back[0].to_bits());
            prop_assert_eq!(b.to_bits(), back[1].to_bits());
            prop_assert_eq!(c.to_bits(), back[2].to_bits());
        }
    }
}
