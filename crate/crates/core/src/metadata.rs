//! DCASE-style filename parsing and caption templating.
//!
//! A label like `section_00_source_test_normal_0001_car_B2_spd_31V_mic_1.wav`
//! carries the clip's condition and attribute key/value pairs; a per-machine
//! template turns it into a descriptive caption for text-to-audio generation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Normal,
    Anomaly,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Normal => "normal",
            Condition::Anomaly => "anomaly",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normal" => Some(Condition::Normal),
            "anomaly" => Some(Condition::Anomaly),
            _ => None,
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipMetadata {
    pub machine_type: String,
    pub section: String,
    pub domain_split: String,
    pub partition: String,
    pub condition: Condition,
    pub clip_index: String,
    /// Attribute pairs in filename order.
    pub attributes: Vec<(String, String)>,
}

impl ClipMetadata {
    pub fn with_machine_type(mut self, machine_type: impl Into<String>) -> Self {
        self.machine_type = machine_type.into();
        self
    }

    pub fn attribute(&self, key: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Canonical filename for this metadata; `parse_label` inverts it.
    pub fn render_filename(&self) -> String {
        let mut s = format!(
            "section_{}_{}_{}_{}_{}",
            self.section, self.domain_split, self.partition, self.condition, self.clip_index
        );
        for (k, v) in &self.attributes {
            write!(s, "_{k}_{v}").unwrap();
        }
        s.push_str(".wav");
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Caption {
    pub text: String,
    pub condition: Condition,
    pub machine_type: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionTemplate {
    pub machine_type: String,
    /// Pattern with `{condition}` and `{attribute-key}` placeholders.
    pub pattern: String,
}

/// Parse a DCASE-style filename. The machine type is not encoded in the
/// filename (it is the enclosing directory in the dataset layout), so it is
/// left empty here; see [`ClipMetadata::with_machine_type`].
pub fn parse_label(filename: &str) -> Result<ClipMetadata> {
    let err = |reason: String| Error::ParseLabel {
        filename: filename.to_string(),
        reason,
    };
    let stem = Path::new(filename)
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| err("not a valid file name".into()))?;
    let stem = stem.strip_suffix(".wav").unwrap_or(stem);
    let tokens: Vec<&str> = stem.split('_').collect();
    if tokens.len() < 6 {
        return Err(err(format!(
            "expected at least 6 underscore-separated tokens, found {}",
            tokens.len()
        )));
    }
    if tokens[0] != "section" {
        return Err(err(format!("expected leading token \"section\", found \"{}\"", tokens[0])));
    }
    let condition = Condition::parse(tokens[4])
        .ok_or_else(|| err(format!("unknown condition \"{}\"", tokens[4])))?;
    let rest = &tokens[6..];
    if rest.len() % 2 != 0 {
        return Err(err(format!(
            "dangling attribute token \"{}\"",
            rest.last().unwrap()
        )));
    }
    let attributes = rest
        .chunks(2)
        .map(|pair| (pair[0].to_string(), pair[1].to_string()))
        .collect();
    Ok(ClipMetadata {
        machine_type: String::new(),
        section: tokens[1].to_string(),
        domain_split: tokens[2].to_string(),
        partition: tokens[3].to_string(),
        condition,
        clip_index: tokens[5].to_string(),
        attributes,
    })
}

/// Substitute `{condition}` and attribute placeholders into the template.
pub fn render_caption(meta: &ClipMetadata, template: &CaptionTemplate) -> Result<Caption> {
    let mut text = String::with_capacity(template.pattern.len());
    let mut chars = template.pattern.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '{' {
            text.push(c);
            continue;
        }
        let mut key = String::new();
        for k in chars.by_ref() {
            if k == '}' {
                break;
            }
            key.push(k);
        }
        if key == "condition" {
            text.push_str(meta.condition.as_str());
        } else if let Some(v) = meta.attribute(&key) {
            text.push_str(v);
        } else {
            return Err(Error::MissingAttribute {
                machine_type: template.machine_type.clone(),
                placeholder: key,
            });
        }
    }
    if text.matches(meta.condition.as_str()).count() != 1 {
        return Err(Error::CaptionConditionCount { text });
    }
    Ok(Caption {
        text,
        condition: meta.condition,
        machine_type: template.machine_type.clone(),
    })
}

/// Swap the single "normal" for "anomaly" to obtain the anomaly caption for a
/// machine whose anomalous sounds are unseen.
pub fn to_anomaly_caption(c: &Caption) -> Result<Caption> {
    if c.condition != Condition::Normal {
        return Err(Error::NotNormalCaption);
    }
    if c.text.matches("normal").count() != 1 {
        return Err(Error::CaptionConditionCount {
            text: c.text.clone(),
        });
    }
    Ok(Caption {
        text: c.text.replacen("normal", "anomaly", 1),
        condition: Condition::Anomaly,
        machine_type: c.machine_type.clone(),
    })
}

/// Template registry keyed by machine type.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: BTreeMap<String, CaptionTemplate>,
}

impl TemplateSet {
    pub fn get(&self, machine_type: &str) -> Result<&CaptionTemplate> {
        self.templates
            .get(machine_type)
            .ok_or_else(|| Error::MissingTemplate {
                machine_type: machine_type.to_string(),
            })
    }

    pub fn insert(&mut self, template: CaptionTemplate) {
        self.templates
            .insert(template.machine_type.clone(), template);
    }

    pub fn machine_types(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(|s| s.as_str())
    }

    /// One tab-separated record per machine type: `machine_type<TAB>pattern`.
    /// Lines starting with `#` are comments.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut templates = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (machine, pattern) = line.split_once('\t').ok_or_else(|| {
                Error::InvalidConfig(format!("template line {}: missing tab separator", no + 1))
            })?;
            templates.insert(
                machine.to_string(),
                CaptionTemplate {
                    machine_type: machine.to_string(),
                    pattern: pattern.to_string(),
                },
            );
        }
        Ok(TemplateSet { templates })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("# machine_type<TAB>caption pattern\n");
        for t in self.templates.values() {
            out.push_str(&t.machine_type);
            out.push('\t');
            out.push_str(&t.pattern);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Built-in templates for the DCASE 2023 Task 2 machine types.
pub fn default_templates() -> TemplateSet {
    let entries: &[(&str, &str)] = &[
        (
            "ToyCar",
            "This is the {condition} sound of a toy car with model {car} and speed {spd}, recorded by a microphone placed at the position {mic}.",
        ),
        (
            "ToyTrain",
            "This is the {condition} sound of a toy train with model {car} and speed {spd}, recorded by a microphone placed at the position {mic}.",
        ),
        (
            "Grinder",
            "This is the {condition} sound of a grinding machine with grindstones {grindstone} and metal plates {plate}.",
        ),
        (
            "Vacuum",
            "This is the {condition} sound of a vacuum cleaner.",
        ),
        (
            "ToyTank",
            "This is the {condition} sound of a toy tank.",
        ),
        (
            "ToyNscale",
            "This is the {condition} sound of a toy N-scale train.",
        ),
        (
            "ToyDrone",
            "This is the {condition} sound of a toy drone.",
        ),
        (
            "Bandsaw",
            "This is the {condition} sound of a band saw machine.",
        ),
        (
            "Shaker",
            "This is the {condition} sound of a shaker machine.",
        ),
    ];
    let mut set = TemplateSet {
        templates: BTreeMap::new(),
    };
    for (machine, pattern) in entries {
        set.insert(CaptionTemplate {
            machine_type: machine.to_string(),
            pattern: pattern.to_string(),
        });
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_toycar_label() {
        let meta = parse_label("section_00_source_test_normal_0001_car_B2_spd_31V_mic_1.wav")
            .unwrap();
        assert_eq!(meta.condition, Condition::Normal);
        assert_eq!(meta.section, "00");
        assert_eq!(meta.domain_split, "source");
        assert_eq!(meta.partition, "test");
        assert_eq!(meta.clip_index, "0001");
        assert_eq!(
            meta.attributes,
            vec![
                ("car".into(), "B2".into()),
                ("spd".into(), "31V".into()),
                ("mic".into(), "1".into())
            ]
        );
    }

    #[test]
    fn parses_grinder_label() {
        let meta =
            parse_label("section_00_source_train_normal_0000_grindstone_2_plate_2.wav").unwrap();
        assert_eq!(meta.partition, "train");
        assert_eq!(
            meta.attributes,
            vec![("grindstone".into(), "2".into()), ("plate".into(), "2".into())]
        );
    }

    #[test]
    fn rejects_unknown_condition() {
        let err = parse_label("section_00_source_test_oops_0001.wav").unwrap_err();
        assert!(err.to_string().contains("oops"), "{err}");
    }

    #[test]
    fn rejects_wrong_arity() {
        assert!(parse_label("section_00_source_test.wav").is_err());
        let err = parse_label("section_00_source_test_normal_0001_car.wav").unwrap_err();
        assert!(err.to_string().contains("car"), "{err}");
    }

    #[test]
    fn toycar_caption_matches_reference() {
        let meta = parse_label("section_00_source_test_normal_0001_car_B2_spd_31V_mic_1.wav")
            .unwrap()
            .with_machine_type("ToyCar");
        let templates = default_templates();
        let caption = render_caption(&meta, templates.get("ToyCar").unwrap()).unwrap();
        assert_eq!(
            caption.text,
            "This is the normal sound of a toy car with model B2 and speed 31V, recorded by a microphone placed at the position 1."
        );
    }

    #[test]
    fn anomaly_label_renders_anomaly_caption() {
        let meta = parse_label("section_00_source_test_anomaly_0001_car_B2_spd_31V_mic_1.wav")
            .unwrap()
            .with_machine_type("ToyCar");
        let templates = default_templates();
        let caption = render_caption(&meta, templates.get("ToyCar").unwrap()).unwrap();
        assert_eq!(
            caption.text,
            "This is the anomaly sound of a toy car with model B2 and speed 31V, recorded by a microphone placed at the position 1."
        );
    }

    #[test]
    fn grinder_caption_matches_reference() {
        let meta = parse_label("section_00_source_train_normal_0000_grindstone_2_plate_2.wav")
            .unwrap()
            .with_machine_type("Grinder");
        let templates = default_templates();
        let caption = render_caption(&meta, templates.get("Grinder").unwrap()).unwrap();
        assert_eq!(
            caption.text,
            "This is the normal sound of a grinding machine with grindstones 2 and metal plates 2."
        );
    }

    #[test]
    fn missing_attribute_is_reported() {
        let meta = parse_label("section_00_source_test_normal_0001.wav")
            .unwrap()
            .with_machine_type("ToyCar");
        let templates = default_templates();
        let err = render_caption(&meta, templates.get("ToyCar").unwrap()).unwrap_err();
        assert!(matches!(err, Error::MissingAttribute { .. }));
    }

    #[test]
    fn anomaly_substitution() {
        let meta = parse_label("section_00_source_test_normal_0001_car_B2_spd_31V_mic_1.wav")
            .unwrap()
            .with_machine_type("ToyCar");
        let templates = default_templates();
        let normal = render_caption(&meta, templates.get("ToyCar").unwrap()).unwrap();
        let anomaly = to_anomaly_caption(&normal).unwrap();
        assert_eq!(anomaly.condition, Condition::Anomaly);
        assert_eq!(
            anomaly.text.split_whitespace().count(),
            normal.text.split_whitespace().count()
        );

        // equals rendering the label with condition forced to anomaly
        let mut forced = meta.clone();
        forced.condition = Condition::Anomaly;
        let direct = render_caption(&forced, templates.get("ToyCar").unwrap()).unwrap();
        assert_eq!(anomaly.text, direct.text);

        // applying again is an error
        assert!(to_anomaly_caption(&anomaly).is_err());
    }

    #[test]
    fn template_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("templates.tsv");
        let templates = default_templates();
        templates.save(&path).unwrap();
        let back = TemplateSet::load(&path).unwrap();
        assert_eq!(templates, back);
    }

    proptest! {
        #[test]
        fn parse_inverts_render_filename(
            section in "[0-9]{2}",
            domain in prop::sample::select(vec!["source", "target"]),
            partition in prop::sample::select(vec!["train", "test"]),
            cond in prop::sample::select(vec![Condition::Normal, Condition::Anomaly]),
            index in "[0-9]{4}",
            attrs in prop::collection::vec(("[a-z]{1,6}", "[A-Za-z0-9]{1,4}"), 0..4)
        ) {
            let meta = ClipMetadata {
                machine_type: String::new(),
                section,
                domain_split: domain.to_string(),
                partition: partition.to_string(),
                condition: cond,
                clip_index: index,
                attributes: attrs,
            };
            let parsed = parse_label(&meta.render_filename()).unwrap();
            prop_assert_eq!(parsed, meta);
        }
    }
}
