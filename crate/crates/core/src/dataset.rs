//! Project backlogs: loading, validation, serialization and summaries.
//!
//! Two on-disk formats are supported. The delimited table is RFC 4180 CSV
//! with a header row naming `id`, `title`, `description`, `story_point` and
//! `split` in any order. JSON-lines carries one object per line with the same
//! five keys. An empty (CSV) or `null` (JSON) story point marks an unlabeled
//! item.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A unitless effort estimate, kept as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StoryPoint(Ratio<i64>);

impl StoryPoint {
    pub fn new(numer: i64, denom: i64) -> Result<Self> {
        if denom == 0 {
            return Err(Error::InvalidArgument("story point denominator is zero".into()));
        }
        Ok(StoryPoint(Ratio::new(numer, denom)))
    }

    pub fn integer(value: i64) -> Self {
        StoryPoint(Ratio::from_integer(value))
    }

    pub fn ratio(&self) -> Ratio<i64> {
        self.0
    }

    pub fn is_positive(&self) -> bool {
        self.0 > Ratio::zero()
    }

    pub fn as_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Number of decimal places needed to print the value exactly, if any.
    fn decimal_places(&self) -> Option<u32> {
        let mut d = *self.0.denom();
        let mut twos = 0u32;
        let mut fives = 0u32;
        while d % 2 == 0 {
            d /= 2;
            twos += 1;
        }
        while d % 5 == 0 {
            d /= 5;
            fives += 1;
        }
        (d == 1).then_some(twos.max(fives))
    }
}

impl fmt::Display for StoryPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (numer, denom) = (*self.0.numer(), *self.0.denom());
        if denom == 1 {
            return write!(f, "{numer}");
        }
        match self.decimal_places() {
            Some(places) if places <= 18 => {
                let scale = 10i128.pow(places);
                let scaled = numer as i128 * (scale / denom as i128);
                let sign = if scaled < 0 { "-" } else { "" };
                let abs = scaled.unsigned_abs();
                let whole = abs / scale as u128;
                let frac = abs % scale as u128;
                write!(f, "{sign}{whole}.{frac:0width$}", width = places as usize)
            }
            _ => write!(f, "{numer}/{denom}"),
        }
    }
}

impl FromStr for StoryPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("not a story point: {s:?}"));
        if let Some((n, d)) = s.split_once('/') {
            let numer: i64 = n.trim().parse().map_err(|_| bad())?;
            let denom: i64 = d.trim().parse().map_err(|_| bad())?;
            return StoryPoint::new(numer, denom).map_err(|_| bad());
        }
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
        if whole.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let digits = format!("{whole}{frac}");
        let numer: i64 = if digits.is_empty() {
            0
        } else {
            digits.parse().map_err(|_| bad())?
        };
        let denom = 10i64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
        let numer = if negative { -numer } else { numer };
        StoryPoint::new(numer, denom).map_err(|_| bad())
    }
}

impl Serialize for StoryPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if *self.0.denom() == 1 {
            return serializer.serialize_i64(*self.0.numer());
        }
        // Emit a JSON number only when it reads back to the same rational.
        let as_float = self.as_f64();
        match format!("{as_float}").parse::<StoryPoint>() {
            Ok(back) if back == *self => serializer.serialize_f64(as_float),
            _ => serializer.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for StoryPoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let value = serde_json::Value::deserialize(deserializer)?;
        let text = match &value {
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::String(s) => s.clone(),
            other => return Err(D::Error::custom(format!("invalid story point {other}"))),
        };
        text.parse().map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BacklogItem {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub story_point: Option<StoryPoint>,
    pub split: Split,
}

impl BacklogItem {
    pub fn sp(&self) -> Option<f64> {
        self.story_point.map(|sp| sp.as_f64())
    }
}

/// Title and description joined by a single space. Surrounding whitespace is
/// trimmed and an empty field contributes nothing.
pub fn item_text(item: &BacklogItem) -> String {
    let title = item.title.trim();
    let description = item.description.trim();
    match (title.is_empty(), description.is_empty()) {
        (false, false) => format!("{title} {description}"),
        (false, true) => title.to_string(),
        (true, false) => description.to_string(),
        (true, true) => String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    DelimitedTable,
    JsonLines,
}

impl DataFormat {
    /// Guess from the file extension: `.jsonl`/`.json`/`.ndjson` are JSON-lines,
    /// everything else is treated as a delimited table.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json" | "ndjson") => DataFormat::JsonLines,
            _ => DataFormat::DelimitedTable,
        }
    }
}

/// An ordered, validated backlog of one project.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectDataset {
    name: String,
    items: Vec<BacklogItem>,
}

impl ProjectDataset {
    pub fn new(name: impl Into<String>, items: Vec<BacklogItem>) -> Result<Self> {
        validate(&items, |i| format!("item {}", i + 1))?;
        Ok(ProjectDataset {
            name: name.into(),
            items,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn items(&self) -> &[BacklogItem] {
        &self.items
    }

    pub fn n(&self) -> usize {
        self.items.len()
    }

    pub fn get(&self, id: &str) -> Option<&BacklogItem> {
        self.items.iter().find(|item| item.id == id)
    }

    pub fn in_splits<'a>(&'a self, splits: &'a [Split]) -> impl Iterator<Item = &'a BacklogItem> + 'a {
        self.items.iter().filter(move |item| splits.contains(&item.split))
    }

    /// Labeled items whose split is one of `splits`, in file order.
    pub fn labeled_in(&self, splits: &[Split]) -> Vec<BacklogItem> {
        self.in_splits(splits)
            .filter(|item| item.story_point.is_some())
            .cloned()
            .collect()
    }
}

fn validate(items: &[BacklogItem], locate: impl Fn(usize) -> String) -> Result<()> {
    let mut seen = HashSet::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        if item.id.is_empty() {
            return Err(Error::Validation(format!("{}: empty id", locate(i))));
        }
        if !seen.insert(item.id.as_str()) {
            return Err(Error::Validation(format!(
                "{}: duplicate id {:?}",
                locate(i),
                item.id
            )));
        }
        if let Some(sp) = item.story_point {
            if !sp.is_positive() {
                return Err(Error::Validation(format!(
                    "{}: story point {} of {:?} is not positive",
                    locate(i),
                    sp,
                    item.id
                )));
            }
        }
    }
    Ok(())
}

pub fn load_project(path: impl AsRef<Path>, format: DataFormat) -> Result<ProjectDataset> {
    let path = path.as_ref();
    let (items, lines) = match format {
        DataFormat::DelimitedTable => read_table(path)?,
        DataFormat::JsonLines => read_json_lines(path)?,
    };
    validate(&items, |i| format!("{}:{}", path.display(), lines[i]))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("project")
        .to_string();
    Ok(ProjectDataset { name, items })
}

const COLUMNS: [&str; 5] = ["id", "title", "description", "story_point", "split"];

fn read_table(path: &Path) -> Result<(Vec<BacklogItem>, Vec<usize>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::format(path, 1, e.to_string()))?
        .clone();
    let mut index = [0usize; 5];
    for (slot, column) in index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == column)
            .ok_or_else(|| Error::format(path, 1, format!("missing column {column:?}")))?;
    }

    let mut items = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::format(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |col: usize| record.get(index[col]).unwrap_or("");
        let story_point = match field(3).trim() {
            "" => None,
            text => Some(
                text.parse::<StoryPoint>()
                    .map_err(|e| Error::format(path, line, e.to_string()))?,
            ),
        };
        let split = field(4)
            .trim()
            .parse::<Split>()
            .map_err(|e| Error::format(path, line, e.to_string()))?;
        items.push(BacklogItem {
            id: field(0).to_string(),
            title: field(1).to_string(),
            description: field(2).to_string(),
            story_point,
            split,
        });
        lines.push(line);
    }
    Ok((items, lines))
}

fn read_json_lines(path: &Path) -> Result<(Vec<BacklogItem>, Vec<usize>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: BacklogItem = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, line_no, e.to_string()))?;
        items.push(item);
        lines.push(line_no);
    }
    Ok((items, lines))
}

/// Write the dataset in the given format. Reading the file back yields an
/// equal dataset.
pub fn save_project(dataset: &ProjectDataset, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        DataFormat::DelimitedTable => {
            let mut writer = csv::Writer::from_writer(file);
            let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
            writer.write_record(COLUMNS).map_err(io)?;
            for item in &dataset.items {
                let sp = item.story_point.map(|sp| sp.to_string()).unwrap_or_default();
                writer
                    .write_record([
                        item.id.as_str(),
                        item.title.as_str(),
                        item.description.as_str(),
                        sp.as_str(),
                        item.split.as_str(),
                    ])
                    .map_err(io)?;
            }
            writer.flush().map_err(|e| Error::io(path, e))?;
        }
        DataFormat::JsonLines => {
            let mut writer = BufWriter::new(file);
            for item in &dataset.items {
                serde_json::to_writer(&mut writer, item)?;
                writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
            writer.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub labeled: usize,
    pub min_sp: StoryPoint,
    pub max_sp: StoryPoint,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub unassigned: usize,
}

pub fn summarize(dataset: &ProjectDataset) -> Result<DatasetSummary> {
    let labeled: Vec<StoryPoint> = dataset.items.iter().filter_map(|i| i.story_point).collect();
    let (Some(min_sp), Some(max_sp)) = (labeled.iter().min(), labeled.iter().max()) else {
        return Err(Error::Validation(format!(
            "project {:?} has no labeled items",
            dataset.name
        )));
    };
    let count = |split: Split| dataset.items.iter().filter(|i| i.split == split).count();
    Ok(DatasetSummary {
        n: dataset.n(),
        labeled: labeled.len(),
        min_sp: *min_sp,
        max_sp: *max_sp,
        train: count(Split::Train),
        validation: count(Split::Validation),
        test: count(Split::Test),
        unassigned: count(Split::Unassigned),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn item(id: &str, sp: Option<i64>, split: Split) -> BacklogItem {
        BacklogItem {
            id: id.into(),
            title: format!("title {id}"),
            description: String::new(),
            story_point: sp.map(StoryPoint::integer),
            split,
        }
    }

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn item_text_joins_with_single_space() {
        let mut it = item("a", None, Split::Train);
        it.title = "Fix login".into();
        it.description = "crashes on null".into();
        assert_eq!(item_text(&it), "Fix login crashes on null");
        it.description.clear();
        assert_eq!(item_text(&it), "Fix login");
        it.title.clear();
        assert_eq!(item_text(&it), "");
        it.description = "only body".into();
        assert_eq!(item_text(&it), "only body");
    }

    #[test]
    fn loads_table_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "p.csv",
            "split,id,title,description,story_point\ntrain,A,first,,3\ntest,B,\"second, quoted\",body,\n",
        );
        let ds = load_project(&path, DataFormat::DelimitedTable).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.name(), "p");
        let ids: Vec<_> = ds.items().iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, ["A", "B"]);
        assert_eq!(ds.items()[1].title, "second, quoted");
        assert_eq!(ds.items()[1].story_point, None);
        assert_eq!(ds.items()[0].story_point, Some(StoryPoint::integer(3)));
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "p.csv",
            "id,title,description,story_point,split\nX,a,,1,train\nX,b,,2,test\n",
        );
        let err = load_project(&path, DataFormat::DelimitedTable).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("duplicate id")), "{err}");
        assert!(err.to_string().contains(":3"), "{err}");
    }

    #[test]
    fn non_positive_story_point_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "p.jsonl", r#"{"id":"A","title":"t","description":"","story_point":0,"split":"train"}"#);
        assert!(matches!(
            load_project(&path, DataFormat::JsonLines),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "p.jsonl",
            "{\"id\":\"A\",\"title\":\"t\",\"description\":\"\",\"story_point\":1,\"split\":\"train\"}\n{not json\n",
        );
        match load_project(&path, DataFormat::JsonLines) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let path = write(&dir, "q.csv", "id,title,description,story_point,split\nA,t,,1,dev\n");
        match load_project(&path, DataFormat::DelimitedTable) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_column_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "p.csv", "id,title,story_point,split\nA,t,1,train\n");
        assert!(matches!(
            load_project(&path, DataFormat::DelimitedTable),
            Err(Error::Format { line: 1, .. })
        ));
    }

    #[test]
    fn summary_counts_splits() {
        let ds = ProjectDataset::new(
            "p",
            vec![
                item("a", Some(3), Split::Train),
                item("b", Some(8), Split::Test),
                item("c", None, Split::Unassigned),
                item("d", Some(1), Split::Validation),
            ],
        )
        .unwrap();
        let s = summarize(&ds).unwrap();
        assert_eq!((s.n, s.labeled), (4, 3));
        assert_eq!(s.min_sp, StoryPoint::integer(1));
        assert_eq!(s.max_sp, StoryPoint::integer(8));
        assert_eq!((s.train, s.validation, s.test, s.unassigned), (1, 1, 1, 1));

        let single = ProjectDataset::new("one", vec![item("x", Some(3), Split::Train)]).unwrap();
        let s = summarize(&single).unwrap();
        assert_eq!((s.n, s.min_sp, s.max_sp), (1, StoryPoint::integer(3), StoryPoint::integer(3)));
    }

    #[test]
    fn summary_needs_a_label() {
        let ds = ProjectDataset::new("p", vec![item("a", None, Split::Train)]).unwrap();
        assert!(summarize(&ds).is_err());
    }

    #[test]
    fn story_point_text_forms() {
        assert_eq!("3".parse::<StoryPoint>().unwrap(), StoryPoint::integer(3));
        assert_eq!("0.5".parse::<StoryPoint>().unwrap(), StoryPoint::new(1, 2).unwrap());
        assert_eq!("2/6".parse::<StoryPoint>().unwrap().to_string(), "1/3");
        assert_eq!(StoryPoint::new(5, 4).unwrap().to_string(), "1.25");
        assert_eq!("-2".parse::<StoryPoint>().unwrap().to_string(), "-2");
        assert!("abc".parse::<StoryPoint>().is_err());
        assert!("1/0".parse::<StoryPoint>().is_err());
        assert!(".".parse::<StoryPoint>().is_err());
    }

    fn arb_story_point() -> impl Strategy<Value = StoryPoint> {
        prop_oneof![
            (1i64..200).prop_map(StoryPoint::integer),
            (1i64..1000, 1i64..64).prop_map(|(n, d)| StoryPoint::new(n, d).unwrap()),
        ]
    }

    fn arb_dataset() -> impl Strategy<Value = ProjectDataset> {
        let split = prop_oneof![
            Just(Split::Train),
            Just(Split::Validation),
            Just(Split::Test),
            Just(Split::Unassigned)
        ];
        prop::collection::vec(
            (".{0,12}", ".{0,30}", prop::option::of(arb_story_point()), split),
            1..12,
        )
        .prop_map(|rows| {
            let items = rows
                .into_iter()
                .enumerate()
                .map(|(i, (title, description, story_point, split))| BacklogItem {
                    id: format!("ID-{i}"),
                    title,
                    description,
                    story_point,
                    split,
                })
                .collect();
            ProjectDataset::new("rt", items).unwrap()
        })
    }

    proptest! {
        #[test]
        fn save_then_load_round_trips(ds in arb_dataset(), json in any::<bool>()) {
            let dir = tempfile::tempdir().unwrap();
            let (format, name) = if json {
                (DataFormat::JsonLines, "rt.jsonl")
            } else {
                (DataFormat::DelimitedTable, "rt.csv")
            };
            let path = dir.path().join(name);
            save_project(&ds, &path, format).unwrap();
            let back = load_project(&path, format).unwrap();
            prop_assert_eq!(back, ds.clone());
            if ds.items().iter().any(|i| i.story_point.is_some()) {
                prop_assert_eq!(summarize(&ds).unwrap().n, ds.n());
            }
        }
    }
}
