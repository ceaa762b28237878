/// Formats a float with six significant digits, `%g` style.
///
/// Fixed notation is used for decimal exponents in `[-4, 6)`, scientific otherwise.
/// Trailing zeros are trimmed. Non-finite values print as `nan`, `inf`, `-inf`.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // Round once in scientific form so the exponent reflects the rounded value.
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" {
            "0".into()
        } else {
            t.to_string()
        }
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::sig6;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(19.90625), "19.9062");
        assert_eq!(sig6(2.944_486_372_867_091), "2.94449");
        assert_eq!(sig6(0.096_3), "0.0963");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(-0.000_012_345_67), "-1.23457e-5");
        assert_eq!(sig6(999_999.7), "1e6");
        assert_eq!(sig6(5.0), "5");
        assert_eq!(sig6(-0.000_000_1), "-1e-7");
    }

    #[test]
    fn parses_back_within_relative_precision() {
        for &x in &[3.141_592_653, -271.828_18, 1.0e-3, 6.02e23, 0.1 + 0.2] {
            let y: f64 = sig6(x).parse().unwrap();
            assert!(((y - x) / x).abs() < 5e-6, "{x} -> {y}");
        }
    }
}
