//! Turning structured trial fields into flat "name: value" text.
//!
//! List fields render in quoted-bracket form — `diseases: ['cancer',
//! 'melanoma']` — and text fields pass through after the name prefix. The
//! full linearization concatenates the phase and every source field with
//! "; " separators, e.g.
//! `phase: phase 2; diseases: ['x']; drugs: ['y']; description: ...`.

use crate::data::record::{ModalityKind, RawField, TrialRecord};
use crate::error::Error;

/// Render a list as `['a', 'b']` (empty list -> `[]`). Embedded quotes and
/// backslashes are escaped so the rendering stays unambiguous.
pub fn render_list(items: &[String]) -> String {
    let mut out = String::from("[");
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push('\'');
        for ch in item.chars() {
            match ch {
                '\'' => out.push_str("\\'"),
                '\\' => out.push_str("\\\\"),
                other => out.push(other),
            }
        }
        out.push('\'');
    }
    out.push(']');
    out
}

/// Linearize one source field: `"<name>: <value>"`. The derived summary has
/// no backing field and cannot be linearized.
pub fn linearize(record: &TrialRecord, kind: ModalityKind) -> Result<String, Error> {
    let field = record.raw_field(kind).ok_or_else(|| Error::InvalidRecord {
        id: record.id.clone(),
        msg: format!("modality {kind} has no backing field to linearize"),
    })?;
    let value = match field {
        RawField::Text(t) => t.to_string(),
        RawField::List(items) => render_list(items),
    };
    Ok(format!("{}: {}", kind.name(), value))
}

/// Linearize the whole record: phase first, then every source field in
/// canonical order, joined with "; ".
pub fn linearize_all(record: &TrialRecord) -> String {
    let mut parts = vec![format!("phase: {}", record.phase.render())];
    for kind in ModalityKind::SOURCE {
        parts.push(linearize(record, kind).expect("source modalities always linearize"));
    }
    parts.join("; ")
}
