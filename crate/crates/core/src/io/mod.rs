//! File formats: IDX datasets, model bundles and report files.

pub mod bundle;
pub mod dataset;
pub mod idx;
pub mod report;

pub use bundle::{load_model_bundle, save_model_bundle, Manifest, ModelBundle, BUNDLE_VERSION};
pub use dataset::LabeledDataset;
pub use idx::{load_idx, write_idx};
pub use report::{export_eval, export_selection, load_selection, EvalReport, Prediction, SelectionReport};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::file(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::file(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}
