//! Output number formatting. Every float written to a report goes through
//! [`sig9`] so output bytes are stable across platforms.

/// Rounds to 9 significant decimal digits.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// `sig9` rendered as text, empty for `None`.
pub fn cell(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{}", sig9(v)),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_nine_digits() {
        assert_eq!(sig9(0.123456789123), 0.123456789);
        assert_eq!(sig9(0.82 * 0.3), 0.246);
        assert_eq!(sig9(123456789987.0), 123456790000.0);
        assert_eq!(sig9(0.0), 0.0);
        assert_eq!(cell(None), "");
        assert_eq!(cell(Some(1.0)), "1");
    }
}
