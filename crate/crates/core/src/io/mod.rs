//! File formats: binary descriptor containers, CSV fixtures and reports.

pub mod csv_fixture;
pub mod descriptor_file;
pub mod report;

pub use csv_fixture::{read_csv_fixture, write_csv_fixture};
pub use descriptor_file::{
    decode_descriptor_set, encode_descriptor_set, read_descriptor_file, read_descriptor_set,
    write_descriptor_file, write_descriptor_set, Manifest,
};
pub use report::{read_report, write_report, ReportDocument, ReportFormat, Timing};
