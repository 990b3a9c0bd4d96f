//! Line-oriented text formats for sequences and dataset manifests.
//!
//! Sequence file (`SKSEQ 1`):
//!
//! ```text
//! SKSEQ 1
//! T M V label view subject
//! x y z            <- T blocks of M*V coordinate lines
//! ...
//! ```
//!
//! Manifest file (`SKMANIFEST 1`): `joints` and `fps` lines, a `classcount`
//! line followed by `index<TAB>name` class lines, then one
//! `sample<TAB>path<TAB>split` line per sequence file (paths relative to the
//! manifest's directory).
//!
//! Coordinates are written with 9 significant digits; a file re-saved after
//! loading is byte-identical because the reload re-parses the same text.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ActionSample, Dataset, DatasetManifest, ManifestEntry, SkeletonSequence, Split};
use crate::error::{Error, Result};

const SEQ_MAGIC: &str = "SKSEQ 1";
const MANIFEST_MAGIC: &str = "SKMANIFEST 1";

fn fmt_coord(x: f64) -> String {
    format!("{x:.8e}")
}

/// Serializes a sample to the sequence text format.
pub fn sequence_to_string(sample: &ActionSample) -> String {
    let seq = &sample.sequence;
    let mut out = String::new();
    let _ = writeln!(out, "{SEQ_MAGIC}");
    let _ = writeln!(
        out,
        "{} {} {} {} {} {}",
        seq.frames(),
        seq.bodies(),
        seq.joints(),
        sample.label,
        sample.view_tag,
        sample.subject_tag
    );
    for t in 0..seq.frames() {
        for b in 0..seq.bodies() {
            for j in 0..seq.joints() {
                let p = seq.position(t, b, j);
                let _ = writeln!(out, "{} {} {}", fmt_coord(p[0]), fmt_coord(p[1]), fmt_coord(p[2]));
            }
        }
    }
    out
}

/// Parses the sequence text format. The class name is left empty; dataset
/// loading fills it from the manifest's class table.
pub fn sequence_from_string(text: &str, origin: &str) -> Result<ActionSample> {
    let mut lines = text.lines().enumerate();
    let bad = |line_no: usize, msg: String| {
        Error::Data(format!("{origin}:{}: {msg}", line_no + 1))
    };

    let (n, magic) = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{origin}: empty file")))?;
    if magic.trim() != SEQ_MAGIC {
        return Err(bad(n, format!("expected header {SEQ_MAGIC:?}, got {magic:?}")));
    }

    let (n, header) = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{origin}: missing dimension line")))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 {
        return Err(bad(n, format!("dimension line needs 6 fields, got {}", parts.len())));
    }
    let frames: usize = parts[0].parse().map_err(|_| bad(n, format!("bad frame count {:?}", parts[0])))?;
    let bodies: usize = parts[1].parse().map_err(|_| bad(n, format!("bad body count {:?}", parts[1])))?;
    let joints: usize = parts[2].parse().map_err(|_| bad(n, format!("bad joint count {:?}", parts[2])))?;
    let label: usize = parts[3].parse().map_err(|_| bad(n, format!("bad label {:?}", parts[3])))?;
    let view_tag = parts[4].to_string();
    let subject_tag = parts[5].to_string();

    let mut seq = SkeletonSequence::new(frames, bodies, joints)?;
    for t in 0..frames {
        for b in 0..bodies {
            for j in 0..joints {
                let (n, line) = lines.next().ok_or_else(|| {
                    Error::Data(format!(
                        "{origin}: truncated at frame {t} body {b} joint {j}: expected {} coordinate lines",
                        frames * bodies * joints
                    ))
                })?;
                let mut nums = line.split_whitespace();
                let mut xyz = [0.0f64; 3];
                for slot in &mut xyz {
                    let tok = nums
                        .next()
                        .ok_or_else(|| bad(n, format!("coordinate line has fewer than 3 values: {line:?}")))?;
                    *slot = tok
                        .parse()
                        .map_err(|_| bad(n, format!("bad coordinate {tok:?}")))?;
                }
                if nums.next().is_some() {
                    return Err(bad(n, format!("coordinate line has more than 3 values: {line:?}")));
                }
                if xyz.iter().any(|v| !v.is_finite()) {
                    return Err(bad(n, format!("non-finite coordinate in {line:?}")));
                }
                seq.set_position(t, b, j, xyz);
            }
        }
    }
    if let Some((n, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(bad(n, format!("unexpected trailing content {extra:?}")));
    }

    // A single-body file marks only slot 0 present; two-body files mark a
    // body absent when all its coordinates are zero.
    let mut sample = ActionSample {
        sequence: seq,
        label,
        class_name: String::new(),
        view_tag,
        subject_tag,
    };
    if bodies == 2 {
        let all_zero = (0..frames).all(|t| {
            (0..joints).all(|j| sample.sequence.position(t, 1, j) == [0.0, 0.0, 0.0])
        });
        if all_zero {
            sample.sequence.set_body_present(1, false);
        }
    }
    Ok(sample)
}

pub fn save_sequence(sample: &ActionSample, path: &Path) -> Result<()> {
    std::fs::write(path, sequence_to_string(sample))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_sequence(path: &Path) -> Result<ActionSample> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    sequence_from_string(&text, &path.display().to_string())
}

pub fn manifest_to_string(manifest: &DatasetManifest) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MANIFEST_MAGIC}");
    let _ = writeln!(out, "joints {}", manifest.joint_count);
    let _ = writeln!(out, "fps {}", manifest.fps);
    let _ = writeln!(out, "classcount {}", manifest.classes.len());
    for (i, name) in manifest.classes.iter().enumerate() {
        let _ = writeln!(out, "{i}\t{name}");
    }
    for entry in &manifest.entries {
        let _ = writeln!(out, "sample\t{}\t{}", entry.path, entry.split.as_str());
    }
    out
}

pub fn manifest_from_string(text: &str, origin: &str) -> Result<DatasetManifest> {
    let bad = |line_no: usize, msg: String| Error::Data(format!("{origin}:{}: {msg}", line_no + 1));
    let mut lines = text.lines().enumerate();

    let (n, magic) = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{origin}: empty file")))?;
    if magic.trim() != MANIFEST_MAGIC {
        return Err(bad(n, format!("expected header {MANIFEST_MAGIC:?}, got {magic:?}")));
    }

    let mut joint_count = None;
    let mut fps = None;
    let mut classcount = None;
    for (n, line) in lines.by_ref() {
        let line = line.trim_end();
        if let Some(rest) = line.strip_prefix("joints ") {
            joint_count = Some(rest.trim().parse::<usize>().map_err(|_| bad(n, format!("bad joints line {line:?}")))?);
        } else if let Some(rest) = line.strip_prefix("fps ") {
            fps = Some(rest.trim().parse::<f64>().map_err(|_| bad(n, format!("bad fps line {line:?}")))?);
        } else if let Some(rest) = line.strip_prefix("classcount ") {
            classcount = Some(rest.trim().parse::<usize>().map_err(|_| bad(n, format!("bad classcount line {line:?}")))?);
            break;
        } else {
            return Err(bad(n, format!("expected joints/fps/classcount line, got {line:?}")));
        }
    }
    let joint_count = joint_count.ok_or_else(|| Error::Data(format!("{origin}: missing joints line")))?;
    let fps = fps.ok_or_else(|| Error::Data(format!("{origin}: missing fps line")))?;
    let classcount = classcount.ok_or_else(|| Error::Data(format!("{origin}: missing classcount line")))?;

    let mut classes = Vec::with_capacity(classcount);
    for i in 0..classcount {
        let (n, line) = lines
            .next()
            .ok_or_else(|| Error::Data(format!("{origin}: truncated class table (expected {classcount} classes)")))?;
        let (idx, name) = line
            .split_once('\t')
            .ok_or_else(|| bad(n, format!("class line must be index<TAB>name, got {line:?}")))?;
        let idx: usize = idx.parse().map_err(|_| bad(n, format!("bad class index {idx:?}")))?;
        if idx != i {
            return Err(bad(n, format!("class index {idx} out of order, expected {i}")));
        }
        classes.push(name.to_string());
    }

    let mut entries = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("sample"), Some(path), Some(split), None) => {
                entries.push(ManifestEntry { path: path.to_string(), split: Split::parse(split)? });
            }
            _ => return Err(bad(n, format!("expected sample<TAB>path<TAB>split, got {line:?}"))),
        }
    }

    Ok(DatasetManifest { classes, joint_count, fps, entries })
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    std::fs::write(path, manifest_to_string(manifest))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    manifest_from_string(&text, &path.display().to_string())
}

/// Loads a manifest and every sample it references, validating labels and
/// joint counts against the manifest header.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = load_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut samples = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let path: PathBuf = dir.join(&entry.path);
        let mut sample = load_sequence(&path)?;
        if sample.label >= manifest.classes.len() {
            return Err(Error::Data(format!(
                "{}: label {} out of range for {} classes",
                path.display(),
                sample.label,
                manifest.classes.len()
            )));
        }
        if sample.sequence.joints() != manifest.joint_count {
            return Err(Error::Data(format!(
                "{}: sequence has {} joints but manifest declares {}",
                path.display(),
                sample.sequence.joints(),
                manifest.joint_count
            )));
        }
        sample.class_name = manifest.classes[sample.label].clone();
        samples.push(sample);
    }
    Ok(Dataset { manifest, samples })
}

/// Writes a whole dataset under `dir`: `manifest.skmanifest` plus one
/// `.skseq` file per sample, named by index.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    debug_assert_eq!(dataset.manifest.entries.len(), dataset.samples.len());
    for (entry, sample) in dataset.manifest.entries.iter().zip(&dataset.samples) {
        save_sequence(sample, &dir.join(&entry.path))?;
    }
    save_manifest(&dataset.manifest, &dir.join("manifest.skmanifest"))
}
