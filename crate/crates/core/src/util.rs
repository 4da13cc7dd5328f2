/// Formats `v` with six significant digits, the precision of every number
/// this crate prints or writes to text artifacts.
pub fn fmt_sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    // The exponent after rounding to six digits, so 9.9999996 counts as 10.
    let sci = format!("{v:.5e}");
    let mag: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if !(-4..6).contains(&mag) {
        return sci;
    }
    let decimals = (5 - mag) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Seeded random inputs shared by unit tests, integration tests, the
/// gradient-check command and the benches.
pub mod test_support {
    use rand::Rng as _;

    use crate::image::Field;
    use crate::rng;

    /// Uniform `[0,1)` field.
    pub fn random_field(h: usize, w: usize, seed: u64) -> Field {
        let mut r = rng::stream(seed, "random-field");
        Field::from_fn(h, w, |_, _| r.random::<f64>())
    }

    /// A correlated pair: `y` is `x` plus uniform noise of the given
    /// amplitude, kept inside `[0,1]`.
    pub fn random_pair(h: usize, w: usize, noise: f64, seed: u64) -> (Field, Field) {
        let x = random_field(h, w, seed);
        let mut r = rng::stream(seed, "random-pair-noise");
        let y = Field::from_fn(h, w, |i, j| {
            (x.get(i, j) + noise * (2.0 * r.random::<f64>() - 1.0)).clamp(0.0, 1.0)
        });
        (x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(28.441234), "28.4412");
        assert_eq!(fmt_sig6(0.80971234), "0.809712");
        assert_eq!(fmt_sig6(1.0), "1");
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(-3.5), "-3.5");
        assert_eq!(fmt_sig6(123456.7), "123457");
        assert_eq!(fmt_sig6(1234567.0), "1.23457e6");
        assert_eq!(fmt_sig6(f64::INFINITY), "inf");
        assert_eq!(fmt_sig6(1.2345e-7), "1.23450e-7");
        assert_eq!(fmt_sig6(9.9999996), "10");
        assert_eq!(fmt_sig6(99999.96), "100000");
    }
}
