//! The accepted HPROF subset.
//!
//! ```text
//! header   "JAVA PROFILE 1.0.1\0"  u32 id_size (=4)  u64 timestamp
//! record   u8 tag  u32 time  u32 length  [length bytes]
//!   0x01 STRING       id, utf-8 text
//!   0x02 LOAD CLASS   u32 serial, id class, u32 stack serial, id name
//!   0x0C HEAP DUMP    heap sub-records (0x1C segments read the same)
//! sub-records
//!   0xFF ROOT UNKNOWN         id
//!   0x20 CLASS DUMP           id, u32 stack, id super, id loader, id signers,
//!                             id domain, id, id, u32 instance size,
//!                             u16 n + constant pool, u16 n + statics,
//!                             u16 n + (id name, u8 type) instance fields
//!   0x21 INSTANCE DUMP        id, u32 stack, id class, u32 n, n bytes of values
//!   0x22 OBJECT ARRAY DUMP    id, u32 stack, u32 n, id class, n ids
//!   0x23 PRIMITIVE ARRAY DUMP id, u32 stack, u32 n, u8 type, n values
//! ```
//!
//! All integers are big-endian. Any other top-level record is skipped by
//! its length.

use super::graph::{
    normalize_class_name, BasicType, ClassInfo, FieldDecl, FieldValue, HeapGraph, Instance, ObjArray, ObjectId,
    PrimArray, NULL_ID,
};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

pub const HPROF_MAGIC: &[u8] = b"JAVA PROFILE 1.0.1\0";
pub const ID_SIZE: u32 = 4;

pub const TAG_STRING: u8 = 0x01;
pub const TAG_LOAD_CLASS: u8 = 0x02;
pub const TAG_HEAP_DUMP: u8 = 0x0C;
pub const TAG_HEAP_DUMP_SEGMENT: u8 = 0x1C;
pub const SUB_ROOT_UNKNOWN: u8 = 0xFF;
pub const SUB_CLASS_DUMP: u8 = 0x20;
pub const SUB_INSTANCE_DUMP: u8 = 0x21;
pub const SUB_OBJECT_ARRAY: u8 = 0x22;
pub const SUB_PRIMITIVE_ARRAY: u8 = 0x23;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HprofError {
    #[error("bad HPROF header: {0}")]
    BadHeader(String),
    #[error("unsupported identifier size {0} (only 4 is accepted)")]
    UnsupportedIdSize(u32),
    #[error("unknown heap sub-record {tag:#04x} at offset {offset}")]
    UnknownHeapSubRecord { tag: u8, offset: usize },
    #[error("{context} {from:#x} refers to missing id {to:#x}")]
    DanglingReference { from: ObjectId, to: ObjectId, context: &'static str },
    #[error("record at offset {offset} is truncated")]
    Truncated { offset: usize },
    #[error("malformed dump at offset {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    /// Absolute offset of `buf[0]` in the file.
    base: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], base: usize) -> Self {
        Cursor { buf, pos: 0, base }
    }

    fn offset(&self) -> usize {
        self.base + self.pos
    }

    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], HprofError> {
        if self.buf.len() - self.pos < n {
            return Err(HprofError::Truncated { offset: self.offset() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, HprofError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, HprofError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, HprofError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, HprofError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn id(&mut self) -> Result<ObjectId, HprofError> {
        self.u32()
    }

    fn basic_type(&mut self) -> Result<BasicType, HprofError> {
        let at = self.offset();
        let tag = self.u8()?;
        BasicType::from_tag(tag).ok_or(HprofError::Malformed { offset: at, reason: format!("basic type {tag}") })
    }

    fn value(&mut self, ty: BasicType) -> Result<FieldValue, HprofError> {
        let b = self.take(ty.width())?;
        Ok(decode_value(ty, b))
    }
}

fn decode_value(ty: BasicType, b: &[u8]) -> FieldValue {
    match ty {
        BasicType::Object => FieldValue::Object(u32::from_be_bytes(b.try_into().unwrap())),
        BasicType::Boolean => FieldValue::Boolean(b[0] != 0),
        BasicType::Char => FieldValue::Char(u16::from_be_bytes([b[0], b[1]])),
        BasicType::Float => FieldValue::Float(f32::from_be_bytes(b.try_into().unwrap())),
        BasicType::Double => FieldValue::Double(f64::from_be_bytes(b.try_into().unwrap())),
        BasicType::Byte => FieldValue::Byte(b[0] as i8),
        BasicType::Short => FieldValue::Short(i16::from_be_bytes([b[0], b[1]])),
        BasicType::Int => FieldValue::Int(i32::from_be_bytes(b.try_into().unwrap())),
        BasicType::Long => FieldValue::Long(i64::from_be_bytes(b.try_into().unwrap())),
    }
}

fn encode_value(v: &FieldValue, out: &mut Vec<u8>) {
    match *v {
        FieldValue::Object(id) => out.extend_from_slice(&id.to_be_bytes()),
        FieldValue::Boolean(b) => out.push(b as u8),
        FieldValue::Char(c) => out.extend_from_slice(&c.to_be_bytes()),
        FieldValue::Float(f) => out.extend_from_slice(&f.to_be_bytes()),
        FieldValue::Double(d) => out.extend_from_slice(&d.to_be_bytes()),
        FieldValue::Byte(b) => out.push(b as u8),
        FieldValue::Short(s) => out.extend_from_slice(&s.to_be_bytes()),
        FieldValue::Int(i) => out.extend_from_slice(&i.to_be_bytes()),
        FieldValue::Long(l) => out.extend_from_slice(&l.to_be_bytes()),
    }
}

struct RawClass {
    offset: usize,
    super_id: ObjectId,
    instance_size: u32,
    statics: Vec<(ObjectId, FieldValue)>,
    fields: Vec<(ObjectId, BasicType)>,
}

struct RawInstance<'a> {
    offset: usize,
    class_id: ObjectId,
    bytes: &'a [u8],
}

#[derive(Default)]
struct Raw<'a> {
    strings: BTreeMap<ObjectId, String>,
    class_names: HashMap<ObjectId, ObjectId>,
    classes: BTreeMap<ObjectId, RawClass>,
    instances: BTreeMap<ObjectId, RawInstance<'a>>,
    obj_arrays: BTreeMap<ObjectId, ObjArray>,
    prim_arrays: BTreeMap<ObjectId, PrimArray>,
    roots: Vec<(usize, ObjectId)>,
}

impl Raw<'_> {
    fn claim(&self, id: ObjectId, offset: usize) -> Result<(), HprofError> {
        let taken = self.classes.contains_key(&id)
            || self.instances.contains_key(&id)
            || self.obj_arrays.contains_key(&id)
            || self.prim_arrays.contains_key(&id);
        if id == NULL_ID || taken {
            return Err(HprofError::Malformed { offset, reason: format!("id {id:#x} is null or reused") });
        }
        Ok(())
    }
}

/// Parses a dump in the accepted subset into a validated [`HeapGraph`].
pub fn parse_hprof(bytes: &[u8]) -> Result<HeapGraph, HprofError> {
    let magic_ok = bytes.len() >= HPROF_MAGIC.len() && &bytes[..HPROF_MAGIC.len()] == HPROF_MAGIC;
    if !magic_ok {
        let shown: String = bytes.iter().take(18).map(|&b| if b.is_ascii_graphic() || b == b' ' { b as char } else { '.' }).collect();
        return Err(HprofError::BadHeader(format!("expected \"JAVA PROFILE 1.0.1\", found {shown:?}")));
    }
    let mut cur = Cursor::new(bytes, 0);
    cur.take(HPROF_MAGIC.len())?;
    let id_size = cur.u32().map_err(|_| HprofError::BadHeader("header truncated".into()))?;
    if id_size != ID_SIZE {
        return Err(HprofError::UnsupportedIdSize(id_size));
    }
    let timestamp = cur.u64().map_err(|_| HprofError::BadHeader("header truncated".into()))?;

    let mut raw = Raw::default();
    while !cur.done() {
        let start = cur.offset();
        let tag = cur.u8()?;
        let _time = cur.u32()?;
        let len = cur.u32()? as usize;
        let body_at = cur.offset();
        let body = cur.take(len).map_err(|_| HprofError::Truncated { offset: start })?;
        let mut b = Cursor::new(body, body_at);
        match tag {
            TAG_STRING => {
                let id = b.id()?;
                let text = b.take(len.saturating_sub(4))?;
                let text = String::from_utf8(text.to_vec()).map_err(|_| HprofError::Malformed {
                    offset: body_at,
                    reason: format!("string {id:#x} is not UTF-8"),
                })?;
                raw.strings.insert(id, text);
            }
            TAG_LOAD_CLASS => {
                let _serial = b.u32()?;
                let class_id = b.id()?;
                let _stack = b.u32()?;
                let name_id = b.id()?;
                raw.class_names.insert(class_id, name_id);
            }
            TAG_HEAP_DUMP | TAG_HEAP_DUMP_SEGMENT => {
                while !b.done() {
                    heap_sub_record(&mut b, &mut raw)?;
                }
            }
            _ => {}
        }
    }
    resolve(raw, timestamp)
}

fn heap_sub_record<'a>(b: &mut Cursor<'a>, raw: &mut Raw<'a>) -> Result<(), HprofError> {
    let at = b.offset();
    match b.u8()? {
        SUB_ROOT_UNKNOWN => raw.roots.push((at, b.id()?)),
        SUB_CLASS_DUMP => {
            let id = b.id()?;
            raw.claim(id, at)?;
            let _stack = b.u32()?;
            let super_id = b.id()?;
            for _ in 0..5 {
                b.id()?;
            }
            let instance_size = b.u32()?;
            for _ in 0..b.u16()? {
                b.u16()?;
                let ty = b.basic_type()?;
                b.value(ty)?;
            }
            let mut statics = Vec::new();
            for _ in 0..b.u16()? {
                let name = b.id()?;
                let ty = b.basic_type()?;
                statics.push((name, b.value(ty)?));
            }
            let mut fields = Vec::new();
            for _ in 0..b.u16()? {
                let name = b.id()?;
                fields.push((name, b.basic_type()?));
            }
            raw.classes.insert(id, RawClass { offset: at, super_id, instance_size, statics, fields });
        }
        SUB_INSTANCE_DUMP => {
            let id = b.id()?;
            raw.claim(id, at)?;
            let _stack = b.u32()?;
            let class_id = b.id()?;
            let n = b.u32()? as usize;
            let bytes = b.take(n)?;
            raw.instances.insert(id, RawInstance { offset: at, class_id, bytes });
        }
        SUB_OBJECT_ARRAY => {
            let id = b.id()?;
            raw.claim(id, at)?;
            let _stack = b.u32()?;
            let n = b.u32()? as usize;
            let class_id = b.id()?;
            let data = b.take(n.checked_mul(4).ok_or(HprofError::Truncated { offset: at })?)?;
            let elements = data.chunks_exact(4).map(|c| u32::from_be_bytes(c.try_into().unwrap())).collect();
            raw.obj_arrays.insert(id, ObjArray { class_id, elements });
        }
        SUB_PRIMITIVE_ARRAY => {
            let id = b.id()?;
            raw.claim(id, at)?;
            let _stack = b.u32()?;
            let count = b.u32()?;
            let elem_type = b.basic_type()?;
            if elem_type == BasicType::Object {
                return Err(HprofError::Malformed { offset: at, reason: "primitive array of objects".into() });
            }
            let n = (count as usize).checked_mul(elem_type.width()).ok_or(HprofError::Truncated { offset: at })?;
            let data = b.take(n)?.to_vec();
            raw.prim_arrays.insert(id, PrimArray { elem_type, count, data });
        }
        tag => return Err(HprofError::UnknownHeapSubRecord { tag, offset: at }),
    }
    Ok(())
}

fn resolve(raw: Raw<'_>, timestamp: u64) -> Result<HeapGraph, HprofError> {
    let string = |from: ObjectId, id: ObjectId, context: &'static str| {
        raw.strings.get(&id).cloned().ok_or(HprofError::DanglingReference { from, to: id, context })
    };
    let mut classes = BTreeMap::new();
    for (&id, c) in &raw.classes {
        let name_id = *raw.class_names.get(&id).ok_or(HprofError::DanglingReference {
            from: id,
            to: id,
            context: "class without LOAD CLASS record",
        })?;
        let name = normalize_class_name(&string(id, name_id, "class name of")?);
        if c.super_id != NULL_ID && !raw.classes.contains_key(&c.super_id) {
            return Err(HprofError::DanglingReference { from: id, to: c.super_id, context: "superclass of" });
        }
        let fields = c
            .fields
            .iter()
            .map(|&(n, ty)| Ok(FieldDecl { name: string(id, n, "field name in")?, ty }))
            .collect::<Result<Vec<_>, HprofError>>()?;
        let statics = c
            .statics
            .iter()
            .map(|&(n, v)| Ok((string(id, n, "static field name in")?, v)))
            .collect::<Result<Vec<_>, HprofError>>()?;
        classes.insert(id, ClassInfo { name, super_id: c.super_id, instance_size: c.instance_size, fields, statics });
    }
    // chains must terminate
    for (&id, c) in &raw.classes {
        let mut seen = vec![id];
        let mut s = c.super_id;
        while s != NULL_ID {
            if seen.contains(&s) {
                return Err(HprofError::Malformed { offset: c.offset, reason: format!("class {id:#x} inherits from itself") });
            }
            seen.push(s);
            s = raw.classes[&s].super_id;
        }
    }

    let mut g = HeapGraph {
        timestamp,
        strings: raw.strings.clone(),
        classes,
        obj_arrays: raw.obj_arrays,
        prim_arrays: raw.prim_arrays,
        ..HeapGraph::default()
    };

    for (&id, ri) in &raw.instances {
        if !g.classes.contains_key(&ri.class_id) {
            return Err(HprofError::DanglingReference { from: id, to: ri.class_id, context: "class of instance" });
        }
        let mut cur = Cursor::new(ri.bytes, ri.offset);
        let mut fields = Vec::new();
        for cid in g.class_chain(ri.class_id) {
            for f in &g.classes[&cid].fields {
                let v = cur.value(f.ty).map_err(|_| HprofError::Malformed {
                    offset: ri.offset,
                    reason: format!("instance {id:#x} holds fewer bytes than its fields need"),
                })?;
                fields.push((f.name.clone(), v));
            }
        }
        if !cur.done() {
            return Err(HprofError::Malformed {
                offset: ri.offset,
                reason: format!("instance {id:#x} holds more bytes than its fields need"),
            });
        }
        g.instances.insert(id, Instance { class_id: ri.class_id, fields });
    }

    let known = |g: &HeapGraph, t: ObjectId| t == NULL_ID || g.is_object(t) || g.classes.contains_key(&t);
    for (&id, i) in &g.instances {
        for (_, v) in &i.fields {
            if let Some(t) = v.as_object() {
                if !known(&g, t) {
                    return Err(HprofError::DanglingReference { from: id, to: t, context: "field of instance" });
                }
            }
        }
    }
    for (&id, a) in &g.obj_arrays {
        if a.class_id != NULL_ID && !g.classes.contains_key(&a.class_id) {
            return Err(HprofError::DanglingReference { from: id, to: a.class_id, context: "class of array" });
        }
        if let Some(&t) = a.elements.iter().find(|&&t| !known(&g, t)) {
            return Err(HprofError::DanglingReference { from: id, to: t, context: "element of array" });
        }
    }
    for &(_, r) in &raw.roots {
        if r == NULL_ID || !known(&g, r) {
            return Err(HprofError::DanglingReference { from: NULL_ID, to: r, context: "GC root" });
        }
        g.roots.insert(r);
    }
    Ok(g)
}

/// Low-level writer for the accepted subset. Sub-records accumulate into a
/// single HEAP DUMP record unless [`HprofWriter::segment`] is called.
pub struct HprofWriter {
    timestamp: u64,
    out: Vec<u8>,
    heap: Vec<u8>,
    strings: HashMap<String, ObjectId>,
    next_string: ObjectId,
    next_serial: u32,
}

impl HprofWriter {
    pub fn new(timestamp: u64) -> Self {
        let mut out = HPROF_MAGIC.to_vec();
        out.extend_from_slice(&ID_SIZE.to_be_bytes());
        out.extend_from_slice(&timestamp.to_be_bytes());
        HprofWriter { timestamp, out, heap: Vec::new(), strings: HashMap::new(), next_string: 1, next_serial: 1 }
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }

    /// Appends a top-level record verbatim.
    pub fn record(&mut self, tag: u8, body: &[u8]) {
        self.out.push(tag);
        self.out.extend_from_slice(&0u32.to_be_bytes());
        self.out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        self.out.extend_from_slice(body);
    }

    /// Interns `s`, emitting a STRING record the first time.
    pub fn string(&mut self, s: &str) -> ObjectId {
        if let Some(&id) = self.strings.get(s) {
            return id;
        }
        let id = self.next_string;
        self.next_string += 1;
        let mut body = id.to_be_bytes().to_vec();
        body.extend_from_slice(s.as_bytes());
        self.record(TAG_STRING, &body);
        self.strings.insert(s.to_string(), id);
        id
    }

    pub fn load_class(&mut self, class_id: ObjectId, name: &str) {
        let name_id = self.string(name);
        let mut body = self.next_serial.to_be_bytes().to_vec();
        self.next_serial += 1;
        body.extend_from_slice(&class_id.to_be_bytes());
        body.extend_from_slice(&0u32.to_be_bytes());
        body.extend_from_slice(&name_id.to_be_bytes());
        self.record(TAG_LOAD_CLASS, &body);
    }

    pub fn class_dump(
        &mut self,
        class_id: ObjectId,
        super_id: ObjectId,
        instance_size: u32,
        statics: &[(&str, FieldValue)],
        fields: &[(&str, BasicType)],
    ) {
        let statics: Vec<(ObjectId, FieldValue)> = statics.iter().map(|(n, v)| (self.string(n), *v)).collect();
        let fields: Vec<(ObjectId, BasicType)> = fields.iter().map(|(n, t)| (self.string(n), *t)).collect();
        let h = &mut self.heap;
        h.push(SUB_CLASS_DUMP);
        h.extend_from_slice(&class_id.to_be_bytes());
        h.extend_from_slice(&0u32.to_be_bytes());
        h.extend_from_slice(&super_id.to_be_bytes());
        h.extend_from_slice(&[0; 20]);
        h.extend_from_slice(&instance_size.to_be_bytes());
        h.extend_from_slice(&0u16.to_be_bytes());
        h.extend_from_slice(&(statics.len() as u16).to_be_bytes());
        for (n, v) in &statics {
            h.extend_from_slice(&n.to_be_bytes());
            h.push(v.basic_type().tag());
            encode_value(v, h);
        }
        h.extend_from_slice(&(fields.len() as u16).to_be_bytes());
        for (n, t) in &fields {
            h.extend_from_slice(&n.to_be_bytes());
            h.push(t.tag());
        }
    }

    /// `values` in dump order: own fields, then superclass fields.
    pub fn instance(&mut self, id: ObjectId, class_id: ObjectId, values: &[FieldValue]) {
        let mut data = Vec::new();
        for v in values {
            encode_value(v, &mut data);
        }
        let h = &mut self.heap;
        h.push(SUB_INSTANCE_DUMP);
        h.extend_from_slice(&id.to_be_bytes());
        h.extend_from_slice(&0u32.to_be_bytes());
        h.extend_from_slice(&class_id.to_be_bytes());
        h.extend_from_slice(&(data.len() as u32).to_be_bytes());
        h.extend_from_slice(&data);
    }

    pub fn object_array(&mut self, id: ObjectId, class_id: ObjectId, elements: &[ObjectId]) {
        let h = &mut self.heap;
        h.push(SUB_OBJECT_ARRAY);
        h.extend_from_slice(&id.to_be_bytes());
        h.extend_from_slice(&0u32.to_be_bytes());
        h.extend_from_slice(&(elements.len() as u32).to_be_bytes());
        h.extend_from_slice(&class_id.to_be_bytes());
        for e in elements {
            h.extend_from_slice(&e.to_be_bytes());
        }
    }

    /// `data` holds `count` big-endian elements of `ty`.
    pub fn primitive_array(&mut self, id: ObjectId, ty: BasicType, count: u32, data: &[u8]) {
        let h = &mut self.heap;
        h.push(SUB_PRIMITIVE_ARRAY);
        h.extend_from_slice(&id.to_be_bytes());
        h.extend_from_slice(&0u32.to_be_bytes());
        h.extend_from_slice(&count.to_be_bytes());
        h.push(ty.tag());
        h.extend_from_slice(data);
    }

    pub fn char_array(&mut self, id: ObjectId, text: &str) {
        let units: Vec<u16> = text.encode_utf16().collect();
        let data: Vec<u8> = units.iter().flat_map(|u| u.to_be_bytes()).collect();
        self.primitive_array(id, BasicType::Char, units.len() as u32, &data);
    }

    pub fn root(&mut self, id: ObjectId) {
        self.heap.push(SUB_ROOT_UNKNOWN);
        self.heap.extend_from_slice(&id.to_be_bytes());
    }

    /// Closes the pending sub-records as a HEAP DUMP SEGMENT.
    pub fn segment(&mut self) {
        if !self.heap.is_empty() {
            let heap = std::mem::take(&mut self.heap);
            self.record(TAG_HEAP_DUMP_SEGMENT, &heap);
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        if !self.heap.is_empty() {
            let heap = std::mem::take(&mut self.heap);
            self.record(TAG_HEAP_DUMP, &heap);
        }
        self.out
    }
}

/// Convenience layer over [`HprofWriter`] that allocates ids and lays out
/// instance fields along the class chain.
type ClassLayout = (ObjectId, u32, Vec<(String, BasicType)>);

pub struct HeapBuilder {
    writer: HprofWriter,
    next_id: ObjectId,
    classes: HashMap<ObjectId, ClassLayout>,
    by_name: HashMap<String, ObjectId>,
}

impl Default for HeapBuilder {
    fn default() -> Self {
        Self::new(0)
    }
}

impl HeapBuilder {
    pub fn new(timestamp: u64) -> Self {
        HeapBuilder { writer: HprofWriter::new(timestamp), next_id: 0x1000, classes: HashMap::new(), by_name: HashMap::new() }
    }

    fn alloc(&mut self) -> ObjectId {
        let id = self.next_id;
        self.next_id += 8;
        id
    }

    pub fn class_id(&self, name: &str) -> Option<ObjectId> {
        self.by_name.get(name).copied()
    }

    /// Declares a class. Its instance size is the superclass's (or an
    /// 8-byte header) plus the widths of its own fields.
    pub fn class(&mut self, name: &str, super_id: Option<ObjectId>, fields: &[(&str, BasicType)]) -> ObjectId {
        let base = super_id.and_then(|s| self.classes.get(&s)).map_or(8, |c| c.1);
        let size = base + fields.iter().map(|(_, t)| t.width() as u32).sum::<u32>();
        self.class_sized(name, super_id, fields, size)
    }

    pub fn class_sized(
        &mut self,
        name: &str,
        super_id: Option<ObjectId>,
        fields: &[(&str, BasicType)],
        instance_size: u32,
    ) -> ObjectId {
        let id = self.alloc();
        self.writer.load_class(id, name);
        self.writer.class_dump(id, super_id.unwrap_or(NULL_ID), instance_size, &[], fields);
        let owned = fields.iter().map(|(n, t)| (n.to_string(), *t)).collect();
        self.classes.insert(id, (super_id.unwrap_or(NULL_ID), instance_size, owned));
        self.by_name.insert(name.to_string(), id);
        id
    }

    fn layout(&self, class_id: ObjectId) -> Vec<(String, BasicType)> {
        let mut out = Vec::new();
        let mut c = class_id;
        while let Some((sup, _, fields)) = self.classes.get(&c) {
            out.extend(fields.iter().cloned());
            c = *sup;
        }
        out
    }

    /// Named values; unnamed fields are written as zero or null.
    pub fn instance(&mut self, class_id: ObjectId, values: &[(&str, FieldValue)]) -> ObjectId {
        let id = self.alloc();
        self.instance_with_id(id, class_id, values);
        id
    }

    pub fn instance_with_id(&mut self, id: ObjectId, class_id: ObjectId, values: &[(&str, FieldValue)]) {
        let laid: Vec<FieldValue> = self
            .layout(class_id)
            .iter()
            .map(|(n, t)| {
                values.iter().find(|(k, _)| k == n).map(|(_, v)| *v).unwrap_or_else(|| zero(*t))
            })
            .collect();
        self.writer.instance(id, class_id, &laid);
    }

    pub fn char_array(&mut self, text: &str) -> ObjectId {
        let id = self.alloc();
        self.writer.char_array(id, text);
        id
    }

    pub fn primitive_array(&mut self, ty: BasicType, count: u32, data: &[u8]) -> ObjectId {
        let id = self.alloc();
        self.writer.primitive_array(id, ty, count, data);
        id
    }

    pub fn object_array(&mut self, class_name: &str, elements: &[ObjectId]) -> ObjectId {
        let cls = match self.class_id(class_name) {
            Some(c) => c,
            None => self.class_sized(class_name, None, &[], 0),
        };
        let id = self.alloc();
        self.writer.object_array(id, cls, elements);
        id
    }

    /// A `java.lang.String` backed by a char array.
    pub fn string(&mut self, text: &str) -> ObjectId {
        let cls = match self.class_id("java.lang.String") {
            Some(c) => c,
            None => self.class("java.lang.String", None, &[("value", BasicType::Object), ("hash", BasicType::Int)]),
        };
        let chars = self.char_array(text);
        self.instance(cls, &[("value", FieldValue::Object(chars))])
    }

    pub fn root(&mut self, id: ObjectId) {
        self.writer.root(id);
    }

    pub fn writer(&mut self) -> &mut HprofWriter {
        &mut self.writer
    }

    pub fn build(self) -> Vec<u8> {
        self.writer.finish()
    }
}

fn zero(t: BasicType) -> FieldValue {
    match t {
        BasicType::Object => FieldValue::Object(NULL_ID),
        BasicType::Boolean => FieldValue::Boolean(false),
        BasicType::Char => FieldValue::Char(0),
        BasicType::Float => FieldValue::Float(0.0),
        BasicType::Double => FieldValue::Double(0.0),
        BasicType::Byte => FieldValue::Byte(0),
        BasicType::Short => FieldValue::Short(0),
        BasicType::Int => FieldValue::Int(0),
        BasicType::Long => FieldValue::Long(0),
    }
}
