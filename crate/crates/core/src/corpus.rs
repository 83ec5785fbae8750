//! Labelled image directories: netpbm files plus a `labels.csv` of
//! `filename,class_id` lines.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub image: Image,
    pub label: usize,
}

/// Loads every file listed in `dir/labels.csv`, in listing order.
///
/// An existing directory with no entries at all is an empty dataset.
pub fn load_dir(dir: &Path) -> Result<Vec<Sample>> {
    let labels_path = dir.join(LABELS_FILE);
    if !labels_path.exists() && fs::read_dir(dir).is_ok_and(|mut d| d.next().is_none()) {
        return Err(Error::EmptyDataset);
    }
    let text = fs::read_to_string(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());

    let mut samples = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Corpus(format!("labels.csv: {e}")))?;
        if record.len() != 2 {
            return Err(Error::Corpus(format!(
                "labels.csv record {}: expected `filename,class_id`",
                line + 1
            )));
        }
        let name = record[0].to_string();
        let label = record[1].parse().map_err(|_| {
            Error::Corpus(format!(
                "labels.csv record {}: bad class id {:?}",
                line + 1,
                &record[1]
            ))
        })?;
        let image = Image::read(&dir.join(&name))?;
        samples.push(Sample { name, image, label });
    }
    Ok(samples)
}

/// Loads just the images of a labelled directory, ignoring labels.
pub fn load_images(dir: &Path) -> Result<Vec<Image>> {
    Ok(load_dir(dir)?.into_iter().map(|s| s.image).collect())
}

/// Writes samples as netpbm files plus `labels.csv`, creating `dir` if needed.
pub fn write_dir(dir: &Path, samples: &[Sample]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut labels = String::new();
    for s in samples {
        s.image.write(&dir.join(&s.name))?;
        labels.push_str(&format!("{},{}\n", s.name, s.label));
    }
    let path = dir.join(LABELS_FILE);
    fs::write(&path, labels).map_err(|e| Error::io(path, e))
}
