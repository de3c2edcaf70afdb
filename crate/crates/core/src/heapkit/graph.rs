use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub type ObjectId = u32;

pub const NULL_ID: ObjectId = 0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HeapError {
    #[error("no object with id {0:#x}")]
    UnknownId(ObjectId),
    #[error("object {0:#x} is not reachable from any root")]
    Unreachable(ObjectId),
}

/// HPROF basic type tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BasicType {
    Object,
    Boolean,
    Char,
    Float,
    Double,
    Byte,
    Short,
    Int,
    Long,
}

impl BasicType {
    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            2 => BasicType::Object,
            4 => BasicType::Boolean,
            5 => BasicType::Char,
            6 => BasicType::Float,
            7 => BasicType::Double,
            8 => BasicType::Byte,
            9 => BasicType::Short,
            10 => BasicType::Int,
            11 => BasicType::Long,
            _ => return None,
        })
    }

    pub fn tag(self) -> u8 {
        match self {
            BasicType::Object => 2,
            BasicType::Boolean => 4,
            BasicType::Char => 5,
            BasicType::Float => 6,
            BasicType::Double => 7,
            BasicType::Byte => 8,
            BasicType::Short => 9,
            BasicType::Int => 10,
            BasicType::Long => 11,
        }
    }

    /// Bytes per value, with 4-byte object ids.
    pub fn width(self) -> usize {
        match self {
            BasicType::Boolean | BasicType::Byte => 1,
            BasicType::Char | BasicType::Short => 2,
            BasicType::Object | BasicType::Int | BasicType::Float => 4,
            BasicType::Long | BasicType::Double => 8,
        }
    }

    pub fn java_name(self) -> &'static str {
        match self {
            BasicType::Object => "java.lang.Object",
            BasicType::Boolean => "boolean",
            BasicType::Char => "char",
            BasicType::Float => "float",
            BasicType::Double => "double",
            BasicType::Byte => "byte",
            BasicType::Short => "short",
            BasicType::Int => "int",
            BasicType::Long => "long",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum FieldValue {
    Object(ObjectId),
    Boolean(bool),
    Char(u16),
    Float(f32),
    Double(f64),
    Byte(i8),
    Short(i16),
    Int(i32),
    Long(i64),
}

impl FieldValue {
    pub fn basic_type(&self) -> BasicType {
        match self {
            FieldValue::Object(_) => BasicType::Object,
            FieldValue::Boolean(_) => BasicType::Boolean,
            FieldValue::Char(_) => BasicType::Char,
            FieldValue::Float(_) => BasicType::Float,
            FieldValue::Double(_) => BasicType::Double,
            FieldValue::Byte(_) => BasicType::Byte,
            FieldValue::Short(_) => BasicType::Short,
            FieldValue::Int(_) => BasicType::Int,
            FieldValue::Long(_) => BasicType::Long,
        }
    }

    pub fn as_object(&self) -> Option<ObjectId> {
        match self {
            FieldValue::Object(id) => Some(*id),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        Some(match *self {
            FieldValue::Byte(v) => v as i64,
            FieldValue::Short(v) => v as i64,
            FieldValue::Char(v) => v as i64,
            FieldValue::Int(v) => v as i64,
            FieldValue::Long(v) => v,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldDecl {
    pub name: String,
    pub ty: BasicType,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassInfo {
    /// Dotted Java name; array classes end in `[]`.
    pub name: String,
    pub super_id: ObjectId,
    pub instance_size: u32,
    pub fields: Vec<FieldDecl>,
    pub statics: Vec<(String, FieldValue)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    pub class_id: ObjectId,
    /// Values in dump order: the class's own fields first, then each superclass's.
    pub fields: Vec<(String, FieldValue)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObjArray {
    pub class_id: ObjectId,
    pub elements: Vec<ObjectId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrimArray {
    pub elem_type: BasicType,
    pub count: u32,
    /// Big-endian element bytes as dumped.
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct HeapGraph {
    pub timestamp: u64,
    pub strings: BTreeMap<ObjectId, String>,
    pub classes: BTreeMap<ObjectId, ClassInfo>,
    pub instances: BTreeMap<ObjectId, Instance>,
    pub obj_arrays: BTreeMap<ObjectId, ObjArray>,
    pub prim_arrays: BTreeMap<ObjectId, PrimArray>,
    pub roots: BTreeSet<ObjectId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectRef<'a> {
    Instance(&'a Instance),
    ObjArray(&'a ObjArray),
    PrimArray(&'a PrimArray),
}

impl HeapGraph {
    pub fn object(&self, id: ObjectId) -> Option<ObjectRef<'_>> {
        if let Some(i) = self.instances.get(&id) {
            Some(ObjectRef::Instance(i))
        } else if let Some(a) = self.obj_arrays.get(&id) {
            Some(ObjectRef::ObjArray(a))
        } else {
            self.prim_arrays.get(&id).map(ObjectRef::PrimArray)
        }
    }

    pub fn is_object(&self, id: ObjectId) -> bool {
        self.object(id).is_some()
    }

    /// Instances and arrays, ascending by id.
    pub fn object_ids(&self) -> Vec<ObjectId> {
        let mut ids: Vec<ObjectId> = self
            .instances
            .keys()
            .chain(self.obj_arrays.keys())
            .chain(self.prim_arrays.keys())
            .copied()
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn object_count(&self) -> usize {
        self.instances.len() + self.obj_arrays.len() + self.prim_arrays.len()
    }

    /// Outgoing references to other objects, in field/element order.
    pub fn references(&self, id: ObjectId) -> Vec<ObjectId> {
        let targets: Vec<ObjectId> = match self.object(id) {
            Some(ObjectRef::Instance(i)) => i.fields.iter().filter_map(|(_, v)| v.as_object()).collect(),
            Some(ObjectRef::ObjArray(a)) => a.elements.clone(),
            _ => Vec::new(),
        };
        targets.into_iter().filter(|&t| t != NULL_ID && self.is_object(t)).collect()
    }

    /// Roots that are objects; class roots add no edges.
    pub fn object_roots(&self) -> Vec<ObjectId> {
        self.roots.iter().copied().filter(|&r| self.is_object(r)).collect()
    }

    pub fn class_name(&self, class_id: ObjectId) -> Option<&str> {
        self.classes.get(&class_id).map(|c| c.name.as_str())
    }

    /// `"char[]"` for primitive arrays, the class name otherwise.
    pub fn class_of(&self, id: ObjectId) -> Option<String> {
        match self.object(id)? {
            ObjectRef::Instance(i) => self.class_name(i.class_id).map(str::to_string),
            ObjectRef::ObjArray(a) => Some(
                self.class_name(a.class_id)
                    .map(str::to_string)
                    .unwrap_or_else(|| "java.lang.Object[]".to_string()),
            ),
            ObjectRef::PrimArray(p) => Some(format!("{}[]", p.elem_type.java_name())),
        }
    }

    /// The class and its superclasses, nearest first.
    pub fn class_chain(&self, class_id: ObjectId) -> Vec<ObjectId> {
        let mut out = Vec::new();
        let mut c = class_id;
        while c != NULL_ID && !out.contains(&c) {
            let Some(info) = self.classes.get(&c) else { break };
            out.push(c);
            c = info.super_id;
        }
        out
    }

    /// True when the object's class is `name` or a subclass of it.
    pub fn is_instance_of(&self, id: ObjectId, name: &str) -> bool {
        match self.object(id) {
            Some(ObjectRef::Instance(i)) => self.class_chain(i.class_id).iter().any(|c| self.class_name(*c) == Some(name)),
            Some(_) => self.class_of(id).as_deref() == Some(name) || name == "java.lang.Object",
            None => false,
        }
    }

    /// First field called `name`, searching the subclass first.
    pub fn field(&self, id: ObjectId, name: &str) -> Option<FieldValue> {
        let i = self.instances.get(&id)?;
        i.fields.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Text content: `java.lang.String` through its `value` array, or a
    /// char/byte array decoded directly.
    pub fn string_value(&self, id: ObjectId) -> Option<String> {
        if let Some(p) = self.prim_arrays.get(&id) {
            return decode_text(p, 0, p.count as usize);
        }
        if !self.is_instance_of(id, "java.lang.String") {
            return None;
        }
        let arr = self.prim_arrays.get(&self.field(id, "value")?.as_object()?)?;
        let offset = self.field(id, "offset").and_then(|v| v.as_i64()).unwrap_or(0).max(0) as usize;
        let count = self
            .field(id, "count")
            .and_then(|v| v.as_i64())
            .map(|c| c.max(0) as usize)
            .unwrap_or(arr.count as usize);
        decode_text(arr, offset, count)
    }

    pub fn is_string(&self, id: ObjectId) -> bool {
        self.is_instance_of(id, "java.lang.String")
    }
}

fn decode_text(p: &PrimArray, offset: usize, count: usize) -> Option<String> {
    let end = offset.checked_add(count)?.min(p.count as usize);
    let offset = offset.min(end);
    match p.elem_type {
        BasicType::Char => {
            let units: Vec<u16> = p.data[offset * 2..end * 2]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect();
            Some(String::from_utf16_lossy(&units))
        }
        BasicType::Byte => Some(p.data[offset..end].iter().map(|&b| b as char).collect()),
        _ => None,
    }
}

/// Instances: the class's instance size. Arrays: a 16-byte header plus elements.
pub fn shallow_size(graph: &HeapGraph, id: ObjectId) -> Result<u64, HeapError> {
    match graph.object(id).ok_or(HeapError::UnknownId(id))? {
        ObjectRef::Instance(i) => Ok(graph.classes.get(&i.class_id).map_or(0, |c| c.instance_size as u64)),
        ObjectRef::ObjArray(a) => Ok(16 + 4 * a.elements.len() as u64),
        ObjectRef::PrimArray(p) => Ok(16 + p.elem_type.width() as u64 * p.count as u64),
    }
}

/// `java/lang/String` -> `java.lang.String`; `[C` -> `char[]`;
/// `[Ljava/lang/Object;` -> `java.lang.Object[]`.
pub fn normalize_class_name(raw: &str) -> String {
    let dims = raw.bytes().take_while(|&b| b == b'[').count();
    if dims == 0 {
        return raw.replace('/', ".");
    }
    let rest = &raw[dims..];
    let base = match rest {
        "Z" => "boolean".to_string(),
        "C" => "char".to_string(),
        "F" => "float".to_string(),
        "D" => "double".to_string(),
        "B" => "byte".to_string(),
        "S" => "short".to_string(),
        "I" => "int".to_string(),
        "J" => "long".to_string(),
        _ => rest
            .strip_prefix('L')
            .and_then(|r| r.strip_suffix(';'))
            .unwrap_or(rest)
            .replace('/', "."),
    };
    format!("{base}{}", "[]".repeat(dims))
}
