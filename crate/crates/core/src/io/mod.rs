//! File formats: NPY matrices, CSV label tables and JSON report documents.

pub mod labels;
pub mod npy;
pub mod report;

pub use labels::{read_labels, read_labels_file, write_labels, write_labels_file, LabelsError};
pub use npy::{
    read_features, read_features_file, read_header, read_npy, read_npy_file, to_npy_bytes,
    write_npy, write_npy_file, NpyError, NpyHeader, Precision,
};
pub use report::ReportDocument;
