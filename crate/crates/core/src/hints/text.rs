//! Flat `field = value` text form for hint documents.

use super::{validate, FieldError, HintField, HintSet, RawHints, ValidationError};

/// One `field = value` line per characteristic, canonical order, trailing newline.
pub fn to_flat_text(hints: &HintSet) -> String {
    let mut out = String::new();
    for field in HintField::ALL {
        out.push_str(field.name());
        out.push_str(" = ");
        out.push_str(&hints.field_text(field));
        out.push('\n');
    }
    out
}

/// Parse the flat form. Blank lines and `#` comments are ignored; fields may
/// appear in any order and missing ones default conservatively.
pub fn parse_flat_text(text: &str) -> Result<HintSet, ValidationError> {
    let mut raw = RawHints::new();
    let mut errors = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((key, value)) => {
                let key = key.trim().to_owned();
                if raw.insert(key.clone(), value.trim().to_owned()).is_some() {
                    errors.push(FieldError { field: key, reason: format!("duplicate on line {}", lineno + 1) });
                }
            }
            None => errors.push(FieldError {
                field: format!("line {}", lineno + 1),
                reason: "expected `field = value`".into(),
            }),
        }
    }
    match validate(&raw) {
        Ok(h) if errors.is_empty() => Ok(h),
        Ok(_) => Err(ValidationError { errors }),
        Err(mut e) => {
            errors.append(&mut e.errors);
            Err(ValidationError { errors })
        }
    }
}
