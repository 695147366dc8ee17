use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 4] = ["path", "emotion", "intensity", "speaker"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Calm,
    Disgust,
    Fear,
    Happiness,
    Sadness,
    Surprise,
    Neutral,
}

impl Emotion {
    pub const ALL: [Emotion; 8] = [
        Emotion::Anger,
        Emotion::Calm,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Happiness,
        Emotion::Sadness,
        Emotion::Surprise,
        Emotion::Neutral,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Calm => "calm",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Happiness => "happiness",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
            Emotion::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Emotion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown emotion `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    Normal,
    Strong,
}

impl Intensity {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Intensity::Normal => "normal",
            Intensity::Strong => "strong",
        }
    }
}

impl fmt::Display for Intensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Intensity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "normal" => Ok(Intensity::Normal),
            "strong" => Ok(Intensity::Strong),
            _ => Err(format!("unknown intensity `{s}`")),
        }
    }
}

/// Classification target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Emotion,
    Intensity,
}

impl Task {
    pub fn num_classes(self) -> usize {
        match self {
            Task::Emotion => 8,
            Task::Intensity => 2,
        }
    }

    /// Class index of an entry, or `None` when the entry does not take part
    /// in this task (neutral utterances have no intensity contrast).
    pub fn label(self, entry: &CorpusEntry) -> Option<usize> {
        match self {
            Task::Emotion => Some(entry.emotion.index()),
            Task::Intensity if entry.emotion == Emotion::Neutral => None,
            Task::Intensity => Some(entry.intensity.index()),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Emotion => "emotion",
            Task::Intensity => "intensity",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "emotion" => Ok(Task::Emotion),
            "intensity" => Ok(Task::Intensity),
            other => Err(Error::InvalidInput(format!(
                "unknown task `{other}` (expected emotion or intensity)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub emotion: Emotion,
    pub intensity: Intensity,
    pub speaker: String,
}

/// Reads a `path,emotion,intensity,speaker` CSV. Relative audio paths are
/// resolved against the manifest's directory; the audio files themselves are
/// not touched here.
pub fn load_manifest(path: &Path) -> Result<Vec<CorpusEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => break (i + 1, l),
            None => return Err(parse_err(1, "empty manifest".into())),
        }
    };
    let cols: Vec<&str> = header.1.trim_start_matches('\u{feff}').split(',').map(str::trim).collect();
    if cols != MANIFEST_HEADER {
        return Err(parse_err(
            header.0,
            format!("expected header `{}`, found `{}`", MANIFEST_HEADER.join(","), header.1),
        ));
    }

    let mut entries = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(parse_err(
                line_no,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let emotion: Emotion = fields[1].parse().map_err(|m| parse_err(line_no, m))?;
        let intensity: Intensity = fields[2].parse().map_err(|m| parse_err(line_no, m))?;
        if emotion == Emotion::Neutral && intensity != Intensity::Normal {
            return Err(parse_err(
                line_no,
                "neutral utterances must have intensity `normal`".into(),
            ));
        }
        if fields[0].is_empty() || fields[3].is_empty() {
            return Err(parse_err(line_no, "empty path or speaker".into()));
        }
        let audio = Path::new(fields[0]);
        entries.push(CorpusEntry {
            path: if audio.is_absolute() {
                audio.to_path_buf()
            } else {
                base.join(audio)
            },
            emotion,
            intensity,
            speaker: fields[3].to_string(),
        });
    }
    Ok(entries)
}

/// Writes entries as a manifest, storing paths relative to `base` when
/// possible.
pub fn write_manifest(path: &Path, entries: &[CorpusEntry], base: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&MANIFEST_HEADER.join(","));
    out.push('\n');
    for e in entries {
        let p = e.path.strip_prefix(base).unwrap_or(&e.path);
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.display(),
            e.emotion,
            e.intensity,
            e.speaker
        ));
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Decodes a RAVDESS file name such as `03-01-05-02-01-01-12.wav`
/// (modality, vocal channel, emotion, intensity, statement, repetition,
/// actor). Returns `None` for anything that is not an audio-only speech file.
pub fn parse_ravdess_name(path: &Path) -> Option<CorpusEntry> {
    let stem = path.file_stem()?.to_str()?;
    if !path.extension()?.eq_ignore_ascii_case("wav") {
        return None;
    }
    let parts: Vec<u32> = stem
        .split('-')
        .map(|p| p.parse().ok())
        .collect::<Option<_>>()?;
    if parts.len() != 7 || parts[0] != 3 || parts[1] != 1 {
        return None;
    }
    let emotion = match parts[2] {
        1 => Emotion::Neutral,
        2 => Emotion::Calm,
        3 => Emotion::Happiness,
        4 => Emotion::Sadness,
        5 => Emotion::Anger,
        6 => Emotion::Fear,
        7 => Emotion::Disgust,
        8 => Emotion::Surprise,
        _ => return None,
    };
    let intensity = match parts[3] {
        1 => Intensity::Normal,
        2 => Intensity::Strong,
        _ => return None,
    };
    if emotion == Emotion::Neutral && intensity == Intensity::Strong {
        return None;
    }
    Some(CorpusEntry {
        path: path.to_path_buf(),
        emotion,
        intensity,
        speaker: format!("actor{:02}", parts[6]),
    })
}

/// Scans `root` recursively for RAVDESS speech files, sorted by path.
pub fn ravdess_manifest(root: &Path) -> Result<Vec<CorpusEntry>> {
    fn walk(dir: &Path, out: &mut Vec<CorpusEntry>) -> Result<()> {
        for item in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let p = item.map_err(|e| Error::io(dir, e))?.path();
            if p.is_dir() {
                walk(&p, out)?;
            } else if let Some(e) = parse_ravdess_name(&p) {
                out.push(e);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, &mut out)?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}
