//! Heap-dump analysis: an HPROF subset, the dominator tree and OQL.
//!
//! ```
//! use caseforge::heapkit::{compute_dominators, oql_execute, parse_hprof, retained_size, HeapBuilder};
//!
//! let mut b = HeapBuilder::default();
//! let token = b.string("authentication-token");
//! b.root(token);
//! let graph = parse_hprof(&b.build()).unwrap();
//!
//! let tree = compute_dominators(&graph);
//! // the 16-byte String plus its 20-char backing array
//! assert_eq!(retained_size(&graph, &tree, token).unwrap(), 16 + 16 + 2 * 20);
//!
//! let rows = oql_execute(&graph, r#"SELECT s FROM java.lang.String s WHERE contains(s, "auth")"#).unwrap();
//! assert_eq!(rows.len(), 1);
//! ```

mod dominators;
mod graph;
mod hprof;
mod oql;

pub use dominators::{compute_dominators, retained_size, top_objects, DominatorTree, ObjectSummary, Parent, SortBy};
pub use graph::{
    normalize_class_name, shallow_size, BasicType, ClassInfo, FieldDecl, FieldValue, HeapError, HeapGraph, Instance,
    ObjArray, ObjectId, ObjectRef, PrimArray, NULL_ID,
};
pub use hprof::{parse_hprof, HeapBuilder, HprofError, HprofWriter, HPROF_MAGIC, ID_SIZE};
pub use oql::{oql_execute, oql_run, parse_oql, ClassPattern, CmpOp, Expr, OqlError, OqlQuery, OqlRow, Operand, Path, Val};
