//! Corpus ingestion: TSV parsing, validation, normalized records, and
//! train/test splitting.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::emotion::{Emotion, EmotionVector, MAX_INTENSITY, MIN_INTENSITY};
use crate::error::{Error, Result};
use crate::keyed;

pub const READER_COUNT: usize = 3;

/// Identifier of one post. Defaults to the 0-based row index of the source file.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct PostId(pub u64);

impl fmt::Display for PostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for PostId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<u64>()
            .map(PostId)
            .map_err(|_| Error::InvalidArgument(format!("post id `{s}` is not an integer")))
    }
}

/// One SNS sentence with its writer annotation and three reader annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPost {
    pub id: PostId,
    pub text: String,
    pub writer: EmotionVector,
    /// Expected length is exactly [`READER_COUNT`]; enforced by [`validate_post`].
    pub readers: Vec<EmotionVector>,
    /// Optional grouping key (e.g. the posting user) for group-disjoint splits.
    pub group: Option<String>,
}

impl AnnotatedPost {
    pub fn new(
        id: PostId,
        text: impl Into<String>,
        writer: EmotionVector,
        readers: Vec<EmotionVector>,
    ) -> Self {
        AnnotatedPost {
            id,
            text: text.into(),
            writer,
            readers,
            group: None,
        }
    }
}

/// One invariant violation found during validation. Violations are data,
/// not errors: a report of zero violations means the post is well-formed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Check all type invariants of one post. Empty report iff well-formed.
pub fn validate_post(post: &AnnotatedPost) -> Vec<Violation> {
    let mut violations = Vec::new();
    if post.text.trim().is_empty() {
        violations.push(Violation {
            field: "text".into(),
            rule: "empty after trimming".into(),
        });
    }
    violations.extend(post.writer.violations("writer"));
    if post.readers.len() != READER_COUNT {
        violations.push(Violation {
            field: "readers.length".into(),
            rule: format!("expected exactly {READER_COUNT}, found {}", post.readers.len()),
        });
    }
    for (i, reader) in post.readers.iter().enumerate() {
        violations.extend(reader.violations(&format!("reader{}", i + 1)));
    }
    violations
}

/// Maps logical fields onto source-file column names. Emotion-bearing
/// patterns contain an `{emotion}` placeholder replaced by the capitalized
/// emotion name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub text_column: String,
    /// Optional integer id column; when absent, ids are 0-based row indices.
    pub id_column: Option<String>,
    /// Optional grouping column (e.g. a user id) used by group-disjoint splits.
    pub group_column: Option<String>,
    pub writer_pattern: String,
    pub reader_patterns: [String; READER_COUNT],
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            text_column: "Sentence".into(),
            id_column: None,
            group_column: None,
            writer_pattern: "Writer_{emotion}".into(),
            reader_patterns: [
                "Reader1_{emotion}".into(),
                "Reader2_{emotion}".into(),
                "Reader3_{emotion}".into(),
            ],
        }
    }
}

impl ColumnMapping {
    pub fn writer_column(&self, emotion: Emotion) -> String {
        self.writer_pattern.replace("{emotion}", emotion.column_name())
    }

    pub fn reader_column(&self, reader: usize, emotion: Emotion) -> String {
        self.reader_patterns[reader].replace("{emotion}", emotion.column_name())
    }
}

struct ResolvedColumns {
    text: usize,
    id: Option<usize>,
    group: Option<usize>,
    writer: [usize; Emotion::COUNT],
    readers: [[usize; Emotion::COUNT]; READER_COUNT],
}

fn resolve_columns(headers: &csv::StringRecord, mapping: &ColumnMapping) -> Result<ResolvedColumns> {
    let index: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, name)| (name, i))
        .collect();
    let lookup = |name: &str| -> Result<usize> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    // Resolve in file-layout order (all writer columns, then each reader)
    // so a missing-column error names the first gap a reader of the file
    // would hit.
    let mut writer = [0usize; Emotion::COUNT];
    let mut readers = [[0usize; Emotion::COUNT]; READER_COUNT];
    for emotion in Emotion::ALL {
        writer[emotion.index()] = lookup(&mapping.writer_column(emotion))?;
    }
    for r in 0..READER_COUNT {
        for emotion in Emotion::ALL {
            readers[r][emotion.index()] = lookup(&mapping.reader_column(r, emotion))?;
        }
    }
    Ok(ResolvedColumns {
        text: lookup(&mapping.text_column)?,
        id: mapping.id_column.as_deref().map(lookup).transpose()?,
        group: mapping.group_column.as_deref().map(lookup).transpose()?,
        writer,
        readers,
    })
}

fn parse_intensity(raw: &str, row: usize, column: &str) -> Result<i8> {
    let value: i8 = raw.trim().parse().map_err(|_| {
        Error::row(row, format!("column `{column}`: `{raw}` is not an integer"))
    })?;
    if !(MIN_INTENSITY..=MAX_INTENSITY).contains(&value) {
        return Err(Error::row(
            row,
            format!("column `{column}`: intensity {value} outside {MIN_INTENSITY}..={MAX_INTENSITY}"),
        ));
    }
    Ok(value)
}

/// Parse a UTF-8 tab-separated file with a header row into posts, in file
/// order. Data rows are numbered from 1 in error messages.
pub fn parse_corpus(path: &Path, mapping: &ColumnMapping) -> Result<Vec<AnnotatedPost>> {
    let file = std::fs::File::open(path)
        .map_err(|err| std::io::Error::new(err.kind(), format!("{}: {err}", path.display())))?;
    parse_corpus_from_reader(file, mapping)
}

pub fn parse_corpus_from_reader<R: std::io::Read>(
    reader: R,
    mapping: &ColumnMapping,
) -> Result<Vec<AnnotatedPost>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let columns = resolve_columns(&headers, mapping)?;

    let mut posts = Vec::new();
    let mut seen_ids = HashSet::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let field = |idx: usize| -> Result<&str> {
            record
                .get(idx)
                .ok_or_else(|| Error::row(row, format!("fewer fields than the header ({idx})")))
        };

        let text = field(columns.text)?;
        if text.trim().is_empty() {
            return Err(Error::row(row, "empty text".to_string()));
        }

        let id = match columns.id {
            Some(idx) => field(idx)?
                .trim()
                .parse::<u64>()
                .map(PostId)
                .map_err(|_| Error::row(row, "id column is not an unsigned integer".to_string()))?,
            None => PostId(i as u64),
        };
        if !seen_ids.insert(id) {
            return Err(Error::row(row, format!("duplicate post id {id}")));
        }

        let mut writer = [0i8; Emotion::COUNT];
        for emotion in Emotion::ALL {
            let column = mapping.writer_column(emotion);
            writer[emotion.index()] =
                parse_intensity(field(columns.writer[emotion.index()])?, row, &column)?;
        }
        let mut readers = Vec::with_capacity(READER_COUNT);
        for r in 0..READER_COUNT {
            let mut values = [0i8; Emotion::COUNT];
            for emotion in Emotion::ALL {
                let column = mapping.reader_column(r, emotion);
                values[emotion.index()] =
                    parse_intensity(field(columns.readers[r][emotion.index()])?, row, &column)?;
            }
            readers.push(EmotionVector::new(values));
        }

        let group = columns
            .group
            .map(|idx| field(idx).map(|s| s.to_string()))
            .transpose()?;

        posts.push(AnnotatedPost {
            id,
            text: text.to_string(),
            writer: EmotionVector::new(writer),
            readers,
            group,
        });
    }
    Ok(posts)
}

fn vector_value(vector: &EmotionVector) -> String {
    vector
        .as_array()
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_vector_value(raw: &str) -> Result<EmotionVector> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != Emotion::COUNT {
        return Err(Error::InvalidArgument(format!(
            "expected {} comma-separated intensities, found {}",
            Emotion::COUNT,
            parts.len()
        )));
    }
    let mut values = [0i8; Emotion::COUNT];
    for (i, part) in parts.iter().enumerate() {
        values[i] = part
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("intensity `{part}` is not an integer")))?;
    }
    Ok(EmotionVector::new(values))
}

/// Write posts as normalized keyed records, one per line.
pub fn write_records<W: Write>(mut w: W, posts: &[AnnotatedPost]) -> Result<()> {
    for post in posts {
        let mut pairs = vec![
            ("post_id", post.id.to_string()),
            ("text", post.text.clone()),
            ("writer", vector_value(&post.writer)),
        ];
        let reader_keys = ["reader1", "reader2", "reader3"];
        for (i, reader) in post.readers.iter().enumerate() {
            let key = reader_keys
                .get(i)
                .copied()
                .unwrap_or("reader_extra");
            pairs.push((key, vector_value(reader)));
        }
        if let Some(group) = &post.group {
            pairs.push(("group", group.clone()));
        }
        writeln!(w, "{}", keyed::record_line(&pairs))?;
    }
    Ok(())
}

/// Read posts back from normalized keyed records.
pub fn read_records<R: std::io::Read>(reader: R) -> Result<Vec<AnnotatedPost>> {
    let mut posts = Vec::new();
    for (i, line) in std::io::BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let pairs = keyed::parse_record_line(&line).map_err(|e| Error::row(i + 1, e.to_string()))?;
        let map: HashMap<String, String> = pairs.into_iter().collect();
        let get = |key: &str| -> Result<&String> {
            map.get(key)
                .ok_or_else(|| Error::row(i + 1, format!("record is missing `{key}`")))
        };
        let id: PostId = get("post_id")?.parse()?;
        let text = get("text")?.clone();
        let writer = parse_vector_value(get("writer")?).map_err(|e| Error::row(i + 1, e.to_string()))?;
        let mut readers = Vec::with_capacity(READER_COUNT);
        for key in ["reader1", "reader2", "reader3"] {
            readers.push(
                parse_vector_value(get(key)?).map_err(|e| Error::row(i + 1, e.to_string()))?,
            );
        }
        posts.push(AnnotatedPost {
            id,
            text,
            writer,
            readers,
            group: map.get("group").cloned(),
        });
    }
    Ok(posts)
}

/// A train/test partition of corpus ids, reproducible from `(ratio, seed)`
/// and the corpus order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train_ids: BTreeSet<PostId>,
    pub test_ids: BTreeSet<PostId>,
    pub seed: u64,
    pub ratio: (u32, u32),
}

impl DatasetSplit {
    pub fn is_test(&self, id: PostId) -> bool {
        self.test_ids.contains(&id)
    }

    /// Serialize as a keyed text artifact: seed, ratio, corpus size, test ids.
    /// Train ids are the complement and are not stored.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let test_ids = self
            .test_ids
            .iter()
            .map(|id| id.to_string())
            .collect::<Vec<_>>()
            .join(",");
        keyed::write_summary(
            &mut w,
            &[
                ("seed", self.seed.to_string()),
                ("ratio", format!("{}:{}", self.ratio.0, self.ratio.1)),
                (
                    "n_posts",
                    (self.train_ids.len() + self.test_ids.len()).to_string(),
                ),
                ("test_ids", test_ids),
            ],
        )
    }

    /// Rebuild a split from its artifact plus the full corpus id list.
    pub fn read(path: &Path, all_ids: &[PostId]) -> Result<DatasetSplit> {
        let map = keyed::read_summary(path)?;
        let seed: u64 = keyed::require(&map, "seed", path)?
            .parse()
            .map_err(|_| Error::Integrity("split seed is not an integer".into()))?;
        let ratio_raw = keyed::require(&map, "ratio", path)?;
        let (a, b) = ratio_raw
            .split_once(':')
            .ok_or_else(|| Error::Integrity(format!("split ratio `{ratio_raw}` is not `a:b`")))?;
        let ratio = (
            a.parse()
                .map_err(|_| Error::Integrity("split ratio is not numeric".into()))?,
            b.parse()
                .map_err(|_| Error::Integrity("split ratio is not numeric".into()))?,
        );
        let n_posts: usize = keyed::require(&map, "n_posts", path)?
            .parse()
            .map_err(|_| Error::Integrity("split n_posts is not an integer".into()))?;
        if n_posts != all_ids.len() {
            return Err(Error::Integrity(format!(
                "split artifact covers {n_posts} posts but the corpus has {}",
                all_ids.len()
            )));
        }
        let mut test_ids = BTreeSet::new();
        let raw = keyed::require(&map, "test_ids", path)?;
        if !raw.is_empty() {
            for part in raw.split(',') {
                test_ids.insert(part.parse::<PostId>()?);
            }
        }
        let all: BTreeSet<PostId> = all_ids.iter().copied().collect();
        if !test_ids.is_subset(&all) {
            return Err(Error::Integrity(
                "split artifact lists test ids absent from the corpus".into(),
            ));
        }
        let train_ids = all.difference(&test_ids).copied().collect();
        Ok(DatasetSplit {
            train_ids,
            test_ids,
            seed,
            ratio,
        })
    }
}

fn check_split_args(n: usize, ratio: (u32, u32)) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("cannot split an empty corpus".into()));
    }
    if ratio.0 == 0 || ratio.1 == 0 {
        return Err(Error::InvalidArgument(format!(
            "ratio components must be positive, got {}:{}",
            ratio.0, ratio.1
        )));
    }
    Ok(())
}

/// Train size under the floor rule: `floor(n * a / (a + b))`, remainder to test.
fn train_size(n: usize, ratio: (u32, u32)) -> usize {
    ((n as u128 * ratio.0 as u128) / (ratio.0 as u128 + ratio.1 as u128)) as usize
}

/// Randomly partition the corpus into train and test ids.
///
/// Deterministic for a fixed corpus order, ratio, and seed.
pub fn split_dataset(
    posts: &[AnnotatedPost],
    ratio: (u32, u32),
    seed: u64,
) -> Result<DatasetSplit> {
    check_split_args(posts.len(), ratio)?;
    let mut ids: Vec<PostId> = posts.iter().map(|p| p.id).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_train = train_size(ids.len(), ratio);
    Ok(DatasetSplit {
        train_ids: ids[..n_train].iter().copied().collect(),
        test_ids: ids[n_train..].iter().copied().collect(),
        seed,
        ratio,
    })
}

/// Split with per-class proportions preserved. `is_positive` is aligned
/// with `posts`; each class is split separately under the floor rule.
pub fn split_dataset_stratified(
    posts: &[AnnotatedPost],
    is_positive: &[bool],
    ratio: (u32, u32),
    seed: u64,
) -> Result<DatasetSplit> {
    check_split_args(posts.len(), ratio)?;
    if is_positive.len() != posts.len() {
        return Err(Error::InvalidArgument(
            "stratification labels are not aligned with the corpus".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut train_ids = BTreeSet::new();
    let mut test_ids = BTreeSet::new();
    for class in [true, false] {
        let mut ids: Vec<PostId> = posts
            .iter()
            .zip(is_positive)
            .filter(|(_, &label)| label == class)
            .map(|(p, _)| p.id)
            .collect();
        ids.shuffle(&mut rng);
        let n_train = train_size(ids.len(), ratio);
        train_ids.extend(&ids[..n_train]);
        test_ids.extend(&ids[n_train..]);
    }
    Ok(DatasetSplit {
        train_ids,
        test_ids,
        seed,
        ratio,
    })
}

/// Split with whole groups kept on one side (posts without a group form
/// singleton groups). The train fraction is matched as closely as group
/// sizes allow, so the exact floor-rule count is not guaranteed.
pub fn split_dataset_grouped(
    posts: &[AnnotatedPost],
    ratio: (u32, u32),
    seed: u64,
) -> Result<DatasetSplit> {
    check_split_args(posts.len(), ratio)?;
    let mut group_members: Vec<(String, Vec<PostId>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for post in posts {
        let key = match &post.group {
            Some(g) => format!("g:{g}"),
            None => format!("id:{}", post.id),
        };
        match index.get(&key) {
            Some(&i) => group_members[i].1.push(post.id),
            None => {
                index.insert(key.clone(), group_members.len());
                group_members.push((key, vec![post.id]));
            }
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    group_members.shuffle(&mut rng);

    let target_train = train_size(posts.len(), ratio);
    let mut train_ids = BTreeSet::new();
    let mut test_ids = BTreeSet::new();
    let mut assigned_train = 0usize;
    let mut last_train_group: Option<Vec<PostId>> = None;
    for (_, members) in group_members {
        if assigned_train < target_train {
            assigned_train += members.len();
            train_ids.extend(members.iter().copied());
            last_train_group = Some(members);
        } else {
            test_ids.extend(members);
        }
    }
    if test_ids.is_empty() {
        // An oversized group can exhaust the test side; move the last train
        // group over, unless the corpus is a single group.
        match last_train_group {
            Some(members) if members.len() < train_ids.len() => {
                for id in members {
                    train_ids.remove(&id);
                    test_ids.insert(id);
                }
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "grouped split needs at least two groups".into(),
                ))
            }
        }
    }
    Ok(DatasetSplit {
        train_ids,
        test_ids,
        seed,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emotion::Emotion;
    use proptest::prelude::*;

    fn post(id: u64) -> AnnotatedPost {
        AnnotatedPost::new(
            PostId(id),
            format!("post {id}"),
            EmotionVector::zero(),
            vec![EmotionVector::zero(); READER_COUNT],
        )
    }

    fn tsv_header() -> String {
        let mapping = ColumnMapping::default();
        let mut columns = vec!["Sentence".to_string()];
        for e in Emotion::ALL {
            columns.push(mapping.writer_column(e));
        }
        for r in 0..READER_COUNT {
            for e in Emotion::ALL {
                columns.push(mapping.reader_column(r, e));
            }
        }
        columns.join("\t")
    }

    fn tsv_row(text: &str, writer: [i8; 8], readers: [[i8; 8]; 3]) -> String {
        let mut fields = vec![text.to_string()];
        fields.extend(writer.iter().map(|v| v.to_string()));
        for reader in readers {
            fields.extend(reader.iter().map(|v| v.to_string()));
        }
        fields.join("\t")
    }

    #[test]
    fn parses_rows_in_order() {
        let body = format!(
            "{}\n{}\n{}\n",
            tsv_header(),
            tsv_row("first", [1, 0, 0, 0, 3, 0, 0, 0], [[0; 8]; 3]),
            tsv_row("second", [0; 8], [[0, 0, 0, 0, 1, 0, 0, 0]; 3]),
        );
        let posts = parse_corpus_from_reader(body.as_bytes(), &ColumnMapping::default()).unwrap();
        assert_eq!(posts.len(), 2);
        assert_eq!(posts[0].id, PostId(0));
        assert_eq!(posts[0].text, "first");
        assert_eq!(posts[0].writer.get(Emotion::Anger), 3);
        assert_eq!(posts[1].readers[2].get(Emotion::Anger), 1);
    }

    #[test]
    fn header_only_file_is_empty() {
        let body = format!("{}\n", tsv_header());
        let posts = parse_corpus_from_reader(body.as_bytes(), &ColumnMapping::default()).unwrap();
        assert!(posts.is_empty());
    }

    #[test]
    fn out_of_range_intensity_is_a_row_error() {
        let body = format!(
            "{}\n{}\n",
            tsv_header(),
            tsv_row("ok", [0, 0, 0, 0, 4, 0, 0, 0], [[0; 8]; 3]),
        );
        let err = parse_corpus_from_reader(body.as_bytes(), &ColumnMapping::default()).unwrap_err();
        match err {
            Error::Row { row, message } => {
                assert_eq!(row, 1);
                assert!(message.contains("Writer_Anger"), "message: {message}");
            }
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_names_it() {
        let body = "Sentence\tWriter_Joy\nhello\t1\n";
        let err = parse_corpus_from_reader(body.as_bytes(), &ColumnMapping::default()).unwrap_err();
        match err {
            Error::MissingColumn(name) => assert_eq!(name, "Writer_Sadness"),
            other => panic!("expected missing column, got {other:?}"),
        }
    }

    #[test]
    fn empty_text_is_a_row_error() {
        let body = format!(
            "{}\n{}\n",
            tsv_header(),
            tsv_row("   ", [0; 8], [[0; 8]; 3]),
        );
        let err = parse_corpus_from_reader(body.as_bytes(), &ColumnMapping::default()).unwrap_err();
        assert!(matches!(err, Error::Row { row: 1, .. }));
    }

    #[test]
    fn validate_accepts_well_formed_posts() {
        assert!(validate_post(&post(0)).is_empty());
    }

    #[test]
    fn validate_reports_reader_count() {
        let mut p = post(0);
        p.readers.pop();
        let violations = validate_post(&p);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].field, "readers.length");
    }

    #[test]
    fn validate_reports_negative_intensity_with_emotion() {
        let mut p = post(0);
        p.writer.set(Emotion::Fear, -1);
        let violations = validate_post(&p);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].field, "writer.fear");
    }

    #[test]
    fn records_round_trip() {
        let mut posts = vec![post(0), post(1)];
        posts[0].text = "tab\tand\nnewline".into();
        posts[1].group = Some("user9".into());
        let mut buf = Vec::new();
        write_records(&mut buf, &posts).unwrap();
        let parsed = read_records(buf.as_slice()).unwrap();
        assert_eq!(parsed, posts);
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let posts: Vec<AnnotatedPost> = (0..5).map(post).collect();
        let split = split_dataset(&posts, (4, 1), 0).unwrap();
        assert_eq!(split.train_ids.len(), 4);
        assert_eq!(split.test_ids.len(), 1);

        let large: Vec<AnnotatedPost> = (0..43_200).map(post).collect();
        let split = split_dataset(&large, (4, 1), 0).unwrap();
        assert_eq!(split.train_ids.len(), 34_560);
        assert_eq!(split.test_ids.len(), 8_640);
    }

    #[test]
    fn split_is_deterministic() {
        let posts: Vec<AnnotatedPost> = (0..10).map(post).collect();
        let a = split_dataset(&posts, (4, 1), 7).unwrap();
        let b = split_dataset(&posts, (4, 1), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_seeds_disagree_on_a_thousand_posts() {
        let posts: Vec<AnnotatedPost> = (0..1000).map(post).collect();
        let mut differing = 0;
        for pair in 0..100u64 {
            let a = split_dataset(&posts, (4, 1), 2 * pair).unwrap();
            let b = split_dataset(&posts, (4, 1), 2 * pair + 1).unwrap();
            if a.test_ids != b.test_ids {
                differing += 1;
            }
        }
        assert!(differing >= 99, "only {differing} of 100 seed pairs differed");
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(
            split_dataset(&[], (4, 1), 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn split_artifact_round_trips() {
        let posts: Vec<AnnotatedPost> = (0..20).map(post).collect();
        let split = split_dataset(&posts, (4, 1), 11).unwrap();
        let mut buf = Vec::new();
        split.write(&mut buf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.txt");
        std::fs::write(&path, &buf).unwrap();
        let ids: Vec<PostId> = posts.iter().map(|p| p.id).collect();
        let loaded = DatasetSplit::read(&path, &ids).unwrap();
        assert_eq!(loaded, split);
    }

    #[test]
    fn stratified_split_preserves_class_balance() {
        let posts: Vec<AnnotatedPost> = (0..100).map(post).collect();
        let labels: Vec<bool> = (0..100).map(|i| i % 10 == 0).collect();
        let split = split_dataset_stratified(&posts, &labels, (4, 1), 3).unwrap();
        let positives_in_test = split
            .test_ids
            .iter()
            .filter(|id| id.0 % 10 == 0)
            .count();
        assert_eq!(positives_in_test, 2); // 10 positives split 8:2
        assert_eq!(split.train_ids.len() + split.test_ids.len(), 100);
    }

    #[test]
    fn grouped_split_keeps_groups_together() {
        let mut posts: Vec<AnnotatedPost> = (0..30).map(post).collect();
        for (i, p) in posts.iter_mut().enumerate() {
            p.group = Some(format!("user{}", i / 3));
        }
        let split = split_dataset_grouped(&posts, (4, 1), 5).unwrap();
        for chunk in 0..10u64 {
            let ids = [PostId(chunk * 3), PostId(chunk * 3 + 1), PostId(chunk * 3 + 2)];
            let in_test: Vec<bool> = ids.iter().map(|id| split.is_test(*id)).collect();
            assert!(
                in_test.iter().all(|&t| t) || in_test.iter().all(|&t| !t),
                "group {chunk} was split across train and test"
            );
        }
    }

    proptest! {
        #[test]
        fn split_partitions_ids_exactly(
            n in 1usize..1000,
            ratio_a in 1u32..9,
            ratio_b in 1u32..9,
            seed in any::<u64>(),
        ) {
            let posts: Vec<AnnotatedPost> = (0..n as u64).map(post).collect();
            let split = split_dataset(&posts, (ratio_a, ratio_b), seed).unwrap();
            prop_assert!(split.train_ids.is_disjoint(&split.test_ids));
            prop_assert_eq!(split.train_ids.len() + split.test_ids.len(), n);
            let all: BTreeSet<PostId> = posts.iter().map(|p| p.id).collect();
            let union: BTreeSet<PostId> =
                split.train_ids.union(&split.test_ids).copied().collect();
            prop_assert_eq!(union, all);
            let expected_train =
                (n as u128 * ratio_a as u128 / (ratio_a as u128 + ratio_b as u128)) as usize;
            prop_assert_eq!(split.train_ids.len(), expected_train);
        }

        #[test]
        fn record_lines_round_trip_any_text(
            text in "[^\\s][\\PC]{0,40}",
            writer in proptest::array::uniform8(0i8..=3),
            r1 in proptest::array::uniform8(0i8..=3),
        ) {
            prop_assume!(!text.trim().is_empty());
            let p = AnnotatedPost::new(
                PostId(3),
                text,
                EmotionVector::new(writer),
                vec![
                    EmotionVector::new(r1),
                    EmotionVector::zero(),
                    EmotionVector::zero(),
                ],
            );
            let mut buf = Vec::new();
            write_records(&mut buf, std::slice::from_ref(&p)).unwrap();
            let parsed = read_records(buf.as_slice()).unwrap();
            prop_assert_eq!(parsed, vec![p]);
        }
    }
}
