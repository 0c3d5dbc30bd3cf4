//! Raw sweep-file decoding, synthetic archive generation and directory scanning.

mod raw;
mod scan;
mod synth;

pub use raw::{
    encode_rdt_raw, parse_header, parse_rdt_raw, EncodeError, RawError, RawHeader, HEADER_LEN, MAGIC,
    MISSING_BITS, SWEEP_HEADER_LEN,
};
pub use scan::{scan_archive_dir, ArchiveListing, ScanError, ScanWarning};
pub use synth::{generate_synthetic, FieldModel, SynthConfig, SynthError, VcpDefinition};
