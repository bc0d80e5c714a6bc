//! C99-style hexadecimal floating point literals (`0x1.8p+1`), the
//! bit-exact text encoding used by the network file format.

/// Formats `v` as a normalized hex float with trailing zero digits removed.
/// Subnormals are written as `0x0.<frac>p-1022`.
pub fn format(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_bits == 0 { (0, -1022) } else { (1, exp_bits - 1023) };
    let mut digits = format!("{frac:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let esign = if exp >= 0 { "+" } else { "-" };
    if digits.is_empty() {
        format!("{sign}0x{lead}p{esign}{}", exp.abs())
    } else {
        format!("{sign}0x{lead}.{digits}p{esign}{}", exp.abs())
    }
}

/// Parses the output of [`format`]. Only the canonical form (leading digit
/// `0` or `1`, at most 13 fraction digits) is accepted.
pub fn parse(s: &str) -> Option<f64> {
    match s {
        "nan" => return Some(f64::NAN),
        "inf" | "+inf" => return Some(f64::INFINITY),
        "-inf" => return Some(f64::NEG_INFINITY),
        _ => {}
    }
    let (neg, rest) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let rest = rest.strip_prefix("0x").or_else(|| rest.strip_prefix("0X"))?;
    let (mantissa, exp) = rest.split_once(['p', 'P'])?;
    let exp: i64 = exp.parse().ok()?;
    let (lead, frac_digits) = match mantissa.split_once('.') {
        Some((l, f)) => (l, f),
        None => (mantissa, ""),
    };
    let lead: u64 = match lead {
        "0" => 0,
        "1" => 1,
        _ => return None,
    };
    if frac_digits.len() > 13 || !frac_digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    let mut frac = 0u64;
    for (i, b) in frac_digits.bytes().enumerate() {
        let d = (b as char).to_digit(16)? as u64;
        frac |= d << (48 - 4 * i);
    }
    let sign_bit = (neg as u64) << 63;
    let bits = if lead == 0 {
        if frac == 0 {
            if exp != 0 {
                return None;
            }
            sign_bit
        } else {
            if exp != -1022 {
                return None;
            }
            sign_bit | frac
        }
    } else {
        let biased = exp + 1023;
        if !(1..=2046).contains(&biased) {
            return None;
        }
        sign_bit | ((biased as u64) << 52) | frac
    };
    Some(f64::from_bits(bits))
}
