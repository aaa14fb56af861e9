//! Shared vocabulary: taxonomy, box geometry, and capture metadata.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::math;

/// Broad category of a taxonomy class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassKind {
    Animal,
    Person,
    Vehicle,
}

/// One entry of the detection taxonomy.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaxonomyClass {
    pub scientific_name: String,
    pub common_name: String,
    pub kind: ClassKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TaxonomyError {
    Parse(String),
    DuplicateScientificName(String),
    Empty,
}

impl fmt::Display for TaxonomyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaxonomyError::Parse(msg) => write!(f, "taxonomy fixture is not valid JSON: {msg}"),
            TaxonomyError::DuplicateScientificName(name) => {
                write!(f, "duplicate scientific name in taxonomy: {name}")
            }
            TaxonomyError::Empty => write!(f, "taxonomy fixture contains no classes"),
        }
    }
}

impl core::error::Error for TaxonomyError {}

/// Lookup failure: the label resolves to no taxonomy class.
///
/// Callers running classification evaluation may map this to the
/// "Don't Know" bucket instead of treating it as fatal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownClass(pub String);

impl fmt::Display for UnknownClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown class label: {:?}", self.0)
    }
}

impl core::error::Error for UnknownClass {}

/// The loaded taxonomy with name-resolution indexes.
#[derive(Clone, Debug)]
pub struct Taxonomy {
    classes: Vec<TaxonomyClass>,
    // Lowercased scientific and common names.
    by_name: BTreeMap<String, usize>,
    // by_name plus unambiguous trailing words of common names ("zebra",
    // "wildebeest"). Ambiguous words ("antelope") are dropped entirely.
    mention_keys: BTreeMap<String, usize>,
}

const BUILTIN_TAXONOMY: &str = include_str!("../fixtures/taxonomy.json");

impl Taxonomy {
    pub fn from_classes(classes: Vec<TaxonomyClass>) -> Result<Self, TaxonomyError> {
        if classes.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut by_name = BTreeMap::new();
        for (idx, class) in classes.iter().enumerate() {
            let sci = class.scientific_name.to_lowercase();
            if by_name.insert(sci, idx).is_some() {
                return Err(TaxonomyError::DuplicateScientificName(
                    class.scientific_name.clone(),
                ));
            }
            by_name.entry(class.common_name.to_lowercase()).or_insert(idx);
        }

        let mut mention_keys: BTreeMap<String, Option<usize>> = BTreeMap::new();
        let mut add_key = |key: String, idx: usize| match mention_keys.entry(key) {
            alloc::collections::btree_map::Entry::Vacant(e) => {
                e.insert(Some(idx));
            }
            alloc::collections::btree_map::Entry::Occupied(mut e) => {
                if *e.get() != Some(idx) {
                    e.insert(None);
                }
            }
        };
        for (idx, class) in classes.iter().enumerate() {
            add_key(class.scientific_name.to_lowercase(), idx);
            add_key(class.common_name.to_lowercase(), idx);
            if let Some(last) = class.common_name.split_whitespace().last() {
                if class.common_name.split_whitespace().count() > 1 && last.len() >= 3 {
                    add_key(last.to_lowercase(), idx);
                }
            }
        }
        let mention_keys = mention_keys
            .into_iter()
            .filter_map(|(k, v)| v.map(|idx| (k, idx)))
            .collect();

        Ok(Self {
            classes,
            by_name,
            mention_keys,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        let classes: Vec<TaxonomyClass> =
            serde_json::from_str(text).map_err(|e| TaxonomyError::Parse(e.to_string()))?;
        Self::from_classes(classes)
    }

    /// The taxonomy fixture shipped with the crate: 29 animal species plus
    /// person and car.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TAXONOMY).expect("builtin taxonomy fixture is valid")
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[TaxonomyClass] {
        &self.classes
    }

    /// Resolve a scientific or common name, case-insensitively, trimming
    /// surrounding whitespace.
    pub fn lookup(&self, label: &str) -> Result<&TaxonomyClass, UnknownClass> {
        let key = label.trim().to_lowercase();
        self.by_name
            .get(&key)
            .map(|&idx| &self.classes[idx])
            .ok_or_else(|| UnknownClass(label.trim().to_owned()))
    }

    /// Resolve a free-text mention (used by scene parsing). Accepts full
    /// names plus unambiguous trailing words of common names.
    pub fn resolve_mention(&self, phrase: &str) -> Option<&TaxonomyClass> {
        self.mention_keys
            .get(&phrase.trim().to_lowercase())
            .map(|&idx| &self.classes[idx])
    }
}

/// Axis-aligned box in pixel coordinates, corner form, min-inclusive /
/// max-exclusive. Serialized as `[x_min, y_min, x_max, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from(v: [f64; 4]) -> Self {
        Self {
            x_min: v[0],
            y_min: v[1],
            x_max: v[2],
            y_max: v[3],
        }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        math::max(self.width(), 0.0) * math::max(self.height(), 0.0)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = math::min(self.x_max, other.x_max) - math::max(self.x_min, other.x_min);
        let h = math::min(self.y_max, other.y_max) - math::max(self.y_min, other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoxError {
    DegenerateBox(BoundingBox),
}

impl fmt::Display for BoxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoxError::DegenerateBox(b) => write!(
                f,
                "box [{}, {}, {}, {}] has zero area after clamping",
                b.x_min, b.y_min, b.x_max, b.y_max
            ),
        }
    }
}

impl core::error::Error for BoxError {}

/// Clamp a box into `[0, width] x [0, height]`, restoring coordinate order
/// first. A box whose clamped area is zero is rejected.
pub fn validate_bbox(bbox: BoundingBox, width: f64, height: f64) -> Result<BoundingBox, BoxError> {
    debug_assert!(width > 0.0 && height > 0.0);
    let (x_min, x_max) = if bbox.x_min <= bbox.x_max {
        (bbox.x_min, bbox.x_max)
    } else {
        (bbox.x_max, bbox.x_min)
    };
    let (y_min, y_max) = if bbox.y_min <= bbox.y_max {
        (bbox.y_min, bbox.y_max)
    } else {
        (bbox.y_max, bbox.y_min)
    };
    let clamped = BoundingBox {
        x_min: math::clamp(x_min, 0.0, width),
        y_min: math::clamp(y_min, 0.0, height),
        x_max: math::clamp(x_max, 0.0, width),
        y_max: math::clamp(y_max, 0.0, height),
    };
    if clamped.width() <= 0.0 || clamped.height() <= 0.0 {
        return Err(BoxError::DegenerateBox(clamped));
    }
    Ok(clamped)
}

/// One localized, labelled, scored object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: TaxonomyClass,
    pub confidence: f64,
    pub bbox: BoundingBox,
}

impl Detection {
    pub fn new(class: TaxonomyClass, confidence: f64, bbox: BoundingBox) -> Self {
        debug_assert!((0.0..=1.0).contains(&confidence));
        Self {
            class,
            confidence,
            bbox,
        }
    }
}

/// Calendar date, serialized as ISO `YYYY-MM-DD`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct CalendarDate {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl CalendarDate {
    pub fn new(year: i32, month: u8, day: u8) -> Option<Self> {
        let date = Self { year, month, day };
        date.is_valid().then_some(date)
    }

    pub fn is_valid(&self) -> bool {
        (1..=12).contains(&self.month)
            && self.day >= 1
            && self.day <= days_in_month(self.year, self.month)
    }

    pub fn format_iso(&self) -> String {
        format!("{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }

    /// Day-first form used by camera overlay stamps.
    pub fn format_dmy(&self) -> String {
        format!("{:02}/{:02}/{:04}", self.day, self.month, self.year)
    }

    pub fn parse_iso(text: &str) -> Option<Self> {
        let bytes = text.as_bytes();
        if bytes.len() != 10 || bytes[4] != b'-' || bytes[7] != b'-' {
            return None;
        }
        let year: i32 = text[0..4].parse().ok()?;
        let month: u8 = text[5..7].parse().ok()?;
        let day: u8 = text[8..10].parse().ok()?;
        Self::new(year, month, day)
    }
}

fn is_leap_year(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            if is_leap_year(year) {
                29
            } else {
                28
            }
        }
        _ => 0,
    }
}

impl Serialize for CalendarDate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.format_iso())
    }
}

impl<'de> Deserialize<'de> for CalendarDate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        CalendarDate::parse_iso(&text)
            .ok_or_else(|| D::Error::custom(format!("invalid ISO date: {text:?}")))
    }
}

/// Wall-clock time of day, serialized as `HH:MM:SS`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ClockTime {
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
}

impl ClockTime {
    pub fn new(hour: u8, minute: u8, second: u8) -> Option<Self> {
        (hour < 24 && minute < 60 && second < 60).then_some(Self {
            hour,
            minute,
            second,
        })
    }

    pub fn format_hms(&self) -> String {
        format!("{:02}:{:02}:{:02}", self.hour, self.minute, self.second)
    }

    pub fn parse_hms(text: &str) -> Option<Self> {
        let bytes = text.as_bytes();
        if bytes.len() != 8 || bytes[2] != b':' || bytes[5] != b':' {
            return None;
        }
        let hour: u8 = text[0..2].parse().ok()?;
        let minute: u8 = text[3..5].parse().ok()?;
        let second: u8 = text[6..8].parse().ok()?;
        Self::new(hour, minute, second)
    }
}

impl Serialize for ClockTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.format_hms())
    }
}

impl<'de> Deserialize<'de> for ClockTime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        ClockTime::parse_hms(&text)
            .ok_or_else(|| D::Error::custom(format!("invalid clock time: {text:?}")))
    }
}

/// Three-letter weekday token as stamped by camera firmware.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Weekday {
    Mon,
    Tue,
    Wed,
    Thu,
    Fri,
    Sat,
    Sun,
}

impl Weekday {
    pub fn parse(token: &str) -> Option<Self> {
        match token.to_ascii_uppercase().as_str() {
            "MON" => Some(Self::Mon),
            "TUE" => Some(Self::Tue),
            "WED" => Some(Self::Wed),
            "THU" => Some(Self::Thu),
            "FRI" => Some(Self::Fri),
            "SAT" => Some(Self::Sat),
            "SUN" => Some(Self::Sun),
            _ => None,
        }
    }

    pub fn token(&self) -> &'static str {
        match self {
            Self::Mon => "MON",
            Self::Tue => "TUE",
            Self::Wed => "WED",
            Self::Thu => "THU",
            Self::Fri => "FRI",
            Self::Sat => "SAT",
            Self::Sun => "SUN",
        }
    }
}

/// Parsed camera overlay stamp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_id: Option<String>,
    pub date: CalendarDate,
    pub time: ClockTime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weekday_token: Option<Weekday>,
}

impl CaptureMetadata {
    /// Re-render the parsed instant as `dd/MM/yyyy HH:mm:ss`; for a parsed
    /// stamp this reproduces the input's date-time substring.
    pub fn format_stamp(&self) -> String {
        format!("{} {}", self.date.format_dmy(), self.time.format_hms())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StampError {
    MalformedStamp,
}

impl fmt::Display for StampError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StampError::MalformedStamp => {
                write!(f, "no dd/MM/yyyy HH:mm:ss pattern found in stamp text")
            }
        }
    }
}

impl core::error::Error for StampError {}

fn parse_dmy(token: &str) -> Option<CalendarDate> {
    let bytes = token.as_bytes();
    if bytes.len() != 10 || bytes[2] != b'/' || bytes[5] != b'/' {
        return None;
    }
    let day: u8 = token[0..2].parse().ok()?;
    let month: u8 = token[3..5].parse().ok()?;
    let year: i32 = token[6..10].parse().ok()?;
    CalendarDate::new(year, month, day)
}

fn is_alphanumeric_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_alphanumeric())
}

/// Locate the first valid `dd/MM/yyyy HH:mm:ss` stamp inside free text.
///
/// Returns the parsed metadata together with the byte range of the matched
/// substring (camera-id and weekday tokens included when captured).
pub fn find_stamp(text: &str) -> Option<(CaptureMetadata, core::ops::Range<usize>)> {
    // Whitespace-delimited tokens with their byte offsets.
    let tokens: Vec<(usize, &str)> = text
        .split_whitespace()
        .map(|t| {
            let offset = t.as_ptr() as usize - text.as_ptr() as usize;
            (offset, t)
        })
        .collect();

    // Stamps embedded in prose often carry trailing punctuation.
    fn trim_tail(tok: &str) -> &str {
        tok.trim_end_matches(|c: char| !c.is_ascii_alphanumeric())
    }

    for (i, &(date_off, date_tok)) in tokens.iter().enumerate() {
        let Some(date) = parse_dmy(trim_tail(date_tok)) else {
            continue;
        };
        let Some(&(time_off, time_tok)) = tokens.get(i + 1) else {
            continue;
        };
        let time_tok = trim_tail(time_tok);
        let Some(time) = ClockTime::parse_hms(time_tok) else {
            continue;
        };

        let mut start = date_off;
        let mut camera_id = None;
        if i > 0 {
            let (prev_off, prev_tok) = tokens[i - 1];
            // Camera IDs like "SA08" carry at least one digit; that keeps
            // ordinary words preceding a stamp out of the field.
            if is_alphanumeric_token(prev_tok) && prev_tok.chars().any(|c| c.is_ascii_digit()) {
                camera_id = Some(prev_tok.to_owned());
                start = prev_off;
            }
        }

        let mut end = time_off + time_tok.len();
        let mut weekday_token = None;
        if let Some(&(wd_off, wd_tok)) = tokens.get(i + 2) {
            let wd_tok = trim_tail(wd_tok);
            if let Some(wd) = Weekday::parse(wd_tok) {
                weekday_token = Some(wd);
                end = wd_off + wd_tok.len();
            }
        }

        return Some((
            CaptureMetadata {
                camera_id,
                date,
                time,
                weekday_token,
            },
            start..end,
        ));
    }
    None
}

/// Parse a raw overlay/stamp string into capture metadata.
///
/// The weekday token is recorded but never used to override the date. A
/// camera id is captured when a leading alphanumeric token (one containing a
/// digit) immediately precedes the date.
pub fn parse_capture_metadata(text: &str) -> Result<CaptureMetadata, StampError> {
    find_stamp(text)
        .map(|(meta, _)| meta)
        .ok_or(StampError::MalformedStamp)
}
