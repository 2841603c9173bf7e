//! Readers and writers for the BOP dataset layout, results CSVs, our
//! `scene_gt_dist.json` annotations and plot-ready exports.

mod annotations;
mod dataset;
mod results;
mod viz;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub use annotations::{
    read_annotations, read_scene_annotations, scene_annotation_path, scene_annotations_to_string,
    write_annotations, write_scene_annotations, ANNOTATION_FILE,
};
pub use dataset::{
    load_dataset, read_models_info, read_targets, DatasetIndex, DatasetOptions, ImageInfo,
    ObjectInfo, SceneInfo, Target,
};
pub use results::{
    parse_results_csv, read_results_csv, write_results_csv, RejectedRow, ResultRow, ResultsFile,
};
pub use viz::{export_viz, viz_rows, VizRow, VizSource};

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
