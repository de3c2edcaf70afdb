//! Acquired-image parsing and raw search.
//!
//! A userdata image is a [`SnapshotArchive`]: a magic header, a sequence of
//! file and directory records, a `0x00` terminator, then slack bytes standing
//! in for unallocated space. Search runs over the raw image bytes and labels
//! each hit with the region it landed in.

mod archive;
mod filetype;
mod search;

pub use archive::{
    parse_archive, ArchiveError, ArchiveParse, ArchiveWarning, EntryExtent, EntryKind, FsEntry,
    SnapshotArchive, MAGIC,
};
pub use filetype::{identify_file_type, FileKind};
pub use search::{keyword_search, Pattern, Region, SearchError, SearchHit};
