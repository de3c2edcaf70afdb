use super::prefs::PrefsValue;
use super::sqlite::SqlValue;

/// 2001-01-01T00:00:00Z.
pub const SECONDS_MIN: i64 = 978_307_200;
/// 2286-11-20T17:46:39Z, the last ten-digit second.
pub const SECONDS_MAX: i64 = 9_999_999_999;

pub const TIMESTAMP_SECONDS: &str = "timestamp? (seconds)";
pub const TIMESTAMP_MILLIS: &str = "timestamp? (millis)";
pub const TOKEN: &str = "token?";

pub const TOKEN_MIN_LEN: usize = 40;

/// Flags cells that look like timestamps or opaque credentials.
///
/// These are hints for the examiner. A `None` says nothing about the cell.
pub fn classify_value(cell: &SqlValue) -> Option<&'static str> {
    match cell {
        SqlValue::Integer(v) => classify_int(*v),
        SqlValue::Text(s) => classify_text(s),
        _ => None,
    }
}

pub fn classify_pref(value: &PrefsValue) -> Option<&'static str> {
    match value {
        PrefsValue::Int { value } | PrefsValue::Long { value } => classify_int(*value),
        PrefsValue::String { value, .. } => classify_text(value),
        _ => None,
    }
}

pub fn classify_int(v: i64) -> Option<&'static str> {
    if (SECONDS_MIN..=SECONDS_MAX).contains(&v) {
        Some(TIMESTAMP_SECONDS)
    } else if (SECONDS_MIN * 1000..=SECONDS_MAX * 1000 + 999).contains(&v) {
        Some(TIMESTAMP_MILLIS)
    } else {
        None
    }
}

pub fn classify_text(s: &str) -> Option<&'static str> {
    if !s.is_empty() && s.len() <= 13 && s.bytes().all(|b| b.is_ascii_digit()) {
        return s.parse().ok().and_then(classify_int);
    }
    let token_alphabet = |b: u8| b.is_ascii_alphanumeric() || b"+/=_.-".contains(&b);
    if s.len() >= TOKEN_MIN_LEN && s.bytes().all(token_alphabet) {
        return Some(TOKEN);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    #[test]
    fn bounds_match_calendar() {
        let lo = Utc.with_ymd_and_hms(2001, 1, 1, 0, 0, 0).unwrap().timestamp();
        let hi = Utc.with_ymd_and_hms(2286, 11, 20, 17, 46, 39).unwrap().timestamp();
        assert_eq!((SECONDS_MIN, SECONDS_MAX), (lo, hi));
    }

    #[test]
    fn examples() {
        assert_eq!(classify_value(&SqlValue::Integer(1_400_000_000)), Some(TIMESTAMP_SECONDS));
        assert_eq!(classify_value(&SqlValue::Integer(1_400_000_000_123)), Some(TIMESTAMP_MILLIS));
        assert_eq!(classify_value(&SqlValue::Text("1400000000".into())), Some(TIMESTAMP_SECONDS));
        let tok = "ya29.AbCdEfGhIjKlMnOpQrStUvWxYz0123456789-_";
        assert_eq!(classify_value(&SqlValue::Text(tok.into())), Some(TOKEN));
        assert_eq!(classify_value(&SqlValue::Text("hello".into())), None);
        assert_eq!(classify_value(&SqlValue::Integer(42)), None);
        assert_eq!(classify_value(&SqlValue::Text(format!("{} x", &tok[..39]))), None);
        assert_eq!(classify_value(&SqlValue::Null), None);
    }

    #[test]
    fn edges() {
        assert_eq!(classify_int(SECONDS_MIN - 1), None);
        assert_eq!(classify_int(SECONDS_MAX + 1), None);
        assert_eq!(classify_int(SECONDS_MIN * 1000), Some(TIMESTAMP_MILLIS));
    }
}
