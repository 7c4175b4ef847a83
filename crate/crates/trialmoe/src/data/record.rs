//! Trial records and the modality taxonomy.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Clinical trial phase. Serialized as the integer 1, 2, or 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    One,
    Two,
    Three,
}

impl Phase {
    pub fn as_u8(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
            Phase::Three => 3,
        }
    }

    pub fn from_u8(v: u8) -> Option<Phase> {
        match v {
            1 => Some(Phase::One),
            2 => Some(Phase::Two),
            3 => Some(Phase::Three),
            _ => None,
        }
    }

    /// Human-readable form used inside linearizations: "phase 2".
    pub fn render(self) -> String {
        format!("phase {}", self.as_u8())
    }
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Phase, D::Error> {
        let v = u8::deserialize(d)?;
        Phase::from_u8(v)
            .ok_or_else(|| serde::de::Error::custom(format!("phase must be 1, 2, or 3, got {v}")))
    }
}

/// The model's input channels, in canonical order. The generated summary
/// comes first, followed by the five source fields of the record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityKind {
    Summarization,
    Diseases,
    Drugs,
    Description,
    Smiles,
    Criteria,
}

impl ModalityKind {
    /// All modalities in canonical order.
    pub const ALL: [ModalityKind; 6] = [
        ModalityKind::Summarization,
        ModalityKind::Diseases,
        ModalityKind::Drugs,
        ModalityKind::Description,
        ModalityKind::Smiles,
        ModalityKind::Criteria,
    ];

    /// The record-backed modalities (everything except the derived summary),
    /// in the order they appear in a full linearization.
    pub const SOURCE: [ModalityKind; 5] = [
        ModalityKind::Diseases,
        ModalityKind::Drugs,
        ModalityKind::Description,
        ModalityKind::Smiles,
        ModalityKind::Criteria,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModalityKind::Summarization => "summarization",
            ModalityKind::Diseases => "diseases",
            ModalityKind::Drugs => "drugs",
            ModalityKind::Description => "description",
            ModalityKind::Smiles => "smiles",
            ModalityKind::Criteria => "criteria",
        }
    }

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        match self {
            ModalityKind::Summarization => 0,
            ModalityKind::Diseases => 1,
            ModalityKind::Drugs => 2,
            ModalityKind::Description => 3,
            ModalityKind::Smiles => 4,
            ModalityKind::Criteria => 5,
        }
    }

    pub fn from_name(name: &str) -> Option<ModalityKind> {
        ModalityKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// SMILES strings are molecular graphs, not prose; they bypass the
    /// language model and use their own tokenizer.
    pub fn is_chemical(self) -> bool {
        matches!(self, ModalityKind::Smiles)
    }
}

impl fmt::Display for ModalityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One clinical trial. `label` is 1 when the trial met its primary endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: String,
    pub phase: Phase,
    pub diseases: Vec<String>,
    pub drugs: Vec<String>,
    pub description: String,
    pub smiles: Vec<String>,
    pub criteria: String,
    pub label: u8,
}

/// Borrowed view of one source field of a record.
pub enum RawField<'a> {
    Text(&'a str),
    List(&'a [String]),
}

impl TrialRecord {
    /// The raw field backing a source modality. The derived summary has no
    /// backing field, so it returns `None`.
    pub fn raw_field(&self, kind: ModalityKind) -> Option<RawField<'_>> {
        match kind {
            ModalityKind::Summarization => None,
            ModalityKind::Diseases => Some(RawField::List(&self.diseases)),
            ModalityKind::Drugs => Some(RawField::List(&self.drugs)),
            ModalityKind::Description => Some(RawField::Text(&self.description)),
            ModalityKind::Smiles => Some(RawField::List(&self.smiles)),
            ModalityKind::Criteria => Some(RawField::Text(&self.criteria)),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.id.trim().is_empty() {
            return Err(Error::InvalidRecord {
                id: self.id.clone(),
                msg: "id must be non-empty".into(),
            });
        }
        if self.label > 1 {
            return Err(Error::InvalidRecord {
                id: self.id.clone(),
                msg: format!("label must be 0 or 1, got {}", self.label),
            });
        }
        Ok(())
    }
}

/// Read a JSONL dataset; errors carry path and 1-based line number.
pub fn read_jsonl(path: &Path) -> Result<Vec<TrialRecord>, Error> {
    let file = File::open(path).map_err(|e| Error::parse(path, 0, format!("cannot open: {e}")))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::parse(path, lineno, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrialRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e))?;
        record
            .validate()
            .map_err(|e| Error::parse(path, lineno, e))?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no records", path.display())));
    }
    Ok(records)
}

/// Write records as JSONL (one compact object per line).
pub fn write_jsonl(path: &Path, records: &[TrialRecord]) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_record() -> TrialRecord {
        TrialRecord {
            id: "NCT00000001".into(),
            phase: Phase::Two,
            diseases: vec!["hypertension".into(), "diabetes".into()],
            drugs: vec!["metformin".into()],
            description: "A study of metformin in adults.".into(),
            smiles: vec!["CN(C)C(=N)NC(=N)N".into()],
            criteria: "Inclusion: adults. Exclusion: pregnancy.".into(),
            label: 1,
        }
    }

    #[test]
    fn modality_order_is_fixed() {
        let names: Vec<&str> = ModalityKind::ALL.iter().map(|k| k.name()).collect();
        assert_eq!(
            names,
            ["summarization", "diseases", "drugs", "description", "smiles", "criteria"]
        );
        for (i, k) in ModalityKind::ALL.iter().enumerate() {
            assert_eq!(k.index(), i);
        }
    }

    #[test]
    fn phase_serializes_as_integer() {
        let r = sample_record();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"phase\":2"), "{json}");
        let back: TrialRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn bad_phase_is_rejected() {
        let json = r#"{"id":"x","phase":4,"diseases":[],"drugs":[],"description":"","smiles":[],"criteria":"","label":0}"#;
        let err = serde_json::from_str::<TrialRecord>(json).unwrap_err();
        assert!(err.to_string().contains("phase must be 1, 2, or 3"));
    }

    #[test]
    fn jsonl_round_trip_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.jsonl");
        let records = vec![sample_record(), {
            let mut r = sample_record();
            r.id = "NCT00000002".into();
            r.label = 0;
            r
        }];
        write_jsonl(&path, &records).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), records);

        // Corrupt the second line and confirm the error points at it.
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1] = "{not json";
        std::fs::write(&path, lines.join("\n")).unwrap();
        let err = read_jsonl(&path).unwrap_err().to_string();
        assert!(err.contains("trials.jsonl:2"), "{err}");
    }

    #[test]
    fn label_out_of_range_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.jsonl");
        let json = r#"{"id":"x","phase":1,"diseases":[],"drugs":[],"description":"","smiles":[],"criteria":"","label":2}"#;
        std::fs::write(&path, json).unwrap();
        let err = read_jsonl(&path).unwrap_err().to_string();
        assert!(err.contains("label must be 0 or 1"), "{err}");
        assert!(err.contains(":1:"), "{err}");
    }

    #[test]
    fn empty_file_is_an_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.jsonl");
        std::fs::write(&path, "\n\n").unwrap();
        assert!(matches!(read_jsonl(&path), Err(Error::EmptyDataset(_))));
    }
}
