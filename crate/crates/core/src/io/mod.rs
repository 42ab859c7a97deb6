//! File formats: ENVI cubes, ground-truth tables, reports and PNG maps.

mod envi;
mod png;
mod report;
mod truth;

pub use envi::{
    header_path, read_abundance_map, read_cube, read_endmembers, read_raw, write_abundance_map, write_cube,
    write_cube_as, write_endmembers, DataType, EnviHeader, Interleave,
};
pub use png::{abundance_image, quantize, write_abundance_png};
pub use report::{parse_report_csv, parse_report_json, write_report, Report, ReportRow, REPORT_DECIMALS};
pub use truth::{read_ground_truth, TruthTable, TABLE_ROUNDING_TOL, TABLE_SUM_TOL};
