/// Formats a scalar float with at most three decimals, trimming trailing
/// zeros but keeping one digit after the point: `7.27364 → "7.274"`,
/// `1.0 → "1.0"`, `5.0006 → "5.001"`.
pub fn format_scalar(x: f64) -> String {
    let s = trimmed(x);
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

/// Formats a list element with at most three decimals, dropping the point
/// entirely for integral values: `90.0 → "90"`, `0.5 → "0.5"`.
pub fn format_list_number(x: f64) -> String {
    trimmed(x)
}

fn trimmed(x: f64) -> String {
    let mut s = format!("{x:.3}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}
