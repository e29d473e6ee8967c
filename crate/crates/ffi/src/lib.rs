//! C ABI over the `mcepl` simulator.
//!
//! Every fallible function returns an [`McStatus`]; on failure the message
//! is available from [`mc_last_error`] on the same thread. Objects are
//! opaque handles created by `*_new`/constructor functions and released by
//! the matching `*_free`. Passing null to a `*_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mcepl::config::{parse_config, RunConfig};
use mcepl::experiment::run_experiment;
use mcepl::masking::{threshold_layer, BitMask, BitMaskSet};
use mcepl::nn::Tensor;
use mcepl::protocol::{account_mask_bits, decode_mask, encode_mask, header_bits, MaskFrame};
use mcepl::topology::{erdos_renyi, ring, Graph};
use mcepl::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Config = 4,
    Generation = 5,
    Protocol = 6,
    Simulation = 7,
    Input = 8,
    Io = 9,
    Panic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(McStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape(_) => McStatus::Shape,
            Error::Argument(_) => McStatus::InvalidArgument,
            Error::Config(_) | Error::ConfigLine { .. } => McStatus::Config,
            Error::Generation { .. } => McStatus::Generation,
            Error::Protocol { .. } => McStatus::Protocol,
            Error::Simulation(_) => McStatus::Simulation,
            Error::Input { .. } => McStatus::Input,
            Error::Io(_) => McStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(McStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> McStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            McStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            McStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<T>(p: *mut T, what: &str) -> Result<&'static mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn cstr(p: *const c_char, what: &str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(McStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn mc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Undirected communication graph.
pub struct McGraph(Graph);

/// Connected G(n, p) graph drawn from `seed`.
///
/// # Safety
/// `out_graph` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn mc_graph_erdos_renyi(n: usize, p: f64, seed: u64, max_retries: usize, out_graph: *mut *mut McGraph) -> McStatus {
    guard(|| {
        let slot = out(out_graph, "out_graph")?;
        *slot = Box::into_raw(Box::new(McGraph(erdos_renyi(n, p, seed, max_retries)?)));
        Ok(())
    })
}

/// Cycle over `n >= 3` nodes.
///
/// # Safety
/// `out_graph` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn mc_graph_ring(n: usize, out_graph: *mut *mut McGraph) -> McStatus {
    guard(|| {
        let slot = out(out_graph, "out_graph")?;
        *slot = Box::into_raw(Box::new(McGraph(ring(n)?)));
        Ok(())
    })
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mc_graph_node_count(graph: *const McGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.node_count())
}

/// Copies the sorted neighbors of `node` into `buf` (capacity `cap`) and
/// stores the degree in `out_len`. A buffer shorter than the degree is an
/// error; query with `cap = 0` first to size it.
///
/// # Safety
/// `graph` must be a live handle, `buf` valid for `cap` writes, `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn mc_graph_neighbors(graph: *const McGraph, node: usize, buf: *mut usize, cap: usize, out_len: *mut usize) -> McStatus {
    guard(|| {
        let g = &graph.as_ref().ok_or_else(|| null("graph"))?.0;
        if node >= g.node_count() {
            return Err(Failure(McStatus::InvalidArgument, format!("node {node} out of range")));
        }
        let nb = g.neighbors(node);
        *out(out_len, "out_len")? = nb.len();
        if cap == 0 {
            return Ok(());
        }
        if cap < nb.len() {
            return Err(Failure(
                McStatus::InvalidArgument,
                format!("buffer holds {cap} entries, degree is {}", nb.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(nb.as_ptr(), buf, nb.len());
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mc_graph_free(graph: *mut McGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Layered binary mask under construction or decoded from a frame.
#[derive(Default)]
pub struct McMaskSet {
    layers: Vec<(usize, BitMask)>,
}

impl McMaskSet {
    fn build(&self) -> Result<BitMaskSet, Failure> {
        Ok(BitMaskSet::new(self.layers.clone())?)
    }
}

#[no_mangle]
pub extern "C" fn mc_mask_set_new() -> *mut McMaskSet {
    Box::into_raw(Box::default())
}

/// Appends a layer. `bits` holds one byte per entry (0 or 1), row-major
/// over `shape`. Layer ids must be strictly ascending.
///
/// # Safety
/// `set` must be a live handle; `shape` valid for `ndim` reads and `bits`
/// for the product of the extents.
#[no_mangle]
pub unsafe extern "C" fn mc_mask_set_push_layer(
    set: *mut McMaskSet,
    layer: usize,
    shape: *const usize,
    ndim: usize,
    bits: *const u8,
    len: usize,
) -> McStatus {
    guard(|| {
        let set = set.as_mut().ok_or_else(|| null("set"))?;
        let shape = slice(shape, ndim, "shape")?;
        let bits = slice(bits, len, "bits")?;
        if let Some(b) = bits.iter().find(|b| **b > 1) {
            return Err(Failure(McStatus::InvalidArgument, format!("mask byte {b} is not 0 or 1")));
        }
        if set.layers.last().is_some_and(|(l, _)| *l >= layer) {
            return Err(Failure(McStatus::InvalidArgument, format!("layer {layer} is not ascending")));
        }
        let bools: Vec<bool> = bits.iter().map(|b| *b == 1).collect();
        set.layers.push((layer, BitMask::from_bools(shape, &bools)?));
        Ok(())
    })
}

/// Number of layers, or 0 for a null handle.
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mc_mask_set_layer_count(set: *const McMaskSet) -> usize {
    set.as_ref().map_or(0, |s| s.layers.len())
}

/// Entry count of the `index`-th layer.
///
/// # Safety
/// `set` must be a live handle and `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn mc_mask_set_layer_len(set: *const McMaskSet, index: usize, out_len: *mut usize) -> McStatus {
    guard(|| {
        let s = set.as_ref().ok_or_else(|| null("set"))?;
        let (_, m) = s
            .layers
            .get(index)
            .ok_or_else(|| Failure(McStatus::InvalidArgument, format!("layer index {index} out of range")))?;
        *out(out_len, "out_len")? = m.len();
        Ok(())
    })
}

/// Copies the `index`-th layer as one byte per entry into `buf`.
///
/// # Safety
/// `set` must be a live handle and `buf` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn mc_mask_set_layer_bits(set: *const McMaskSet, index: usize, buf: *mut u8, cap: usize) -> McStatus {
    guard(|| {
        let s = set.as_ref().ok_or_else(|| null("set"))?;
        let (_, m) = s
            .layers
            .get(index)
            .ok_or_else(|| Failure(McStatus::InvalidArgument, format!("layer index {index} out of range")))?;
        if cap < m.len() {
            return Err(Failure(McStatus::InvalidArgument, format!("buffer holds {cap} bytes, layer has {}", m.len())));
        }
        if m.len() > 0 && buf.is_null() {
            return Err(null("buf"));
        }
        for (i, b) in m.iter().enumerate() {
            *buf.add(i) = u8::from(b);
        }
        Ok(())
    })
}

/// Payload bits of one transmission of `set` (one bit per entry).
///
/// # Safety
/// `set` must be a live handle and `out_bits` writable.
#[no_mangle]
pub unsafe extern "C" fn mc_mask_set_payload_bits(set: *const McMaskSet, out_bits: *mut u64) -> McStatus {
    guard(|| {
        let s = set.as_ref().ok_or_else(|| null("set"))?;
        *out(out_bits, "out_bits")? = account_mask_bits(&s.build()?);
        Ok(())
    })
}

/// Header bits of a frame carrying `layers` layers.
#[no_mangle]
pub extern "C" fn mc_frame_header_bits(layers: usize) -> u64 {
    header_bits(layers)
}

/// # Safety
/// `set` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mc_mask_set_free(set: *mut McMaskSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Owned byte buffer returned by the library.
pub struct McBuffer(Vec<u8>);

/// # Safety
/// `buf` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mc_buffer_data(buf: *const McBuffer) -> *const u8 {
    buf.as_ref().map_or(ptr::null(), |b| b.0.as_ptr())
}

/// # Safety
/// `buf` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mc_buffer_len(buf: *const McBuffer) -> usize {
    buf.as_ref().map_or(0, |b| b.0.len())
}

/// # Safety
/// `buf` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mc_buffer_free(buf: *mut McBuffer) {
    if !buf.is_null() {
        drop(Box::from_raw(buf));
    }
}

/// Serializes `set` into a wire frame.
///
/// # Safety
/// `set` must be a live handle and `out_frame` writable.
#[no_mangle]
pub unsafe extern "C" fn mc_mask_encode(set: *const McMaskSet, sender: usize, round: u32, out_frame: *mut *mut McBuffer) -> McStatus {
    guard(|| {
        let s = set.as_ref().ok_or_else(|| null("set"))?;
        let slot = out(out_frame, "out_frame")?;
        let frame = encode_mask(&s.build()?, sender, round)?;
        *slot = Box::into_raw(Box::new(McBuffer(frame.into_bytes())));
        Ok(())
    })
}

/// Parses a frame, validating it against the layer ids and shapes of
/// `layout`. On success `out_set` receives a new mask set.
///
/// # Safety
/// `bytes` must be valid for `len` reads, `layout` a live handle and
/// `out_set` writable.
#[no_mangle]
pub unsafe extern "C" fn mc_mask_decode(
    bytes: *const u8,
    len: usize,
    layout: *const McMaskSet,
    out_sender: *mut usize,
    out_set: *mut *mut McMaskSet,
) -> McStatus {
    guard(|| {
        let bytes = slice(bytes, len, "bytes")?.to_vec();
        let layout = layout.as_ref().ok_or_else(|| null("layout"))?;
        let slot = out(out_set, "out_set")?;
        let expected: Vec<(usize, Vec<usize>)> = layout.layers.iter().map(|(l, m)| (*l, m.shape().to_vec())).collect();
        let frame = MaskFrame::from_bytes(bytes)?;
        let decoded = decode_mask(&frame, &expected)?;
        if !out_sender.is_null() {
            *out_sender = frame.sender();
        }
        let layers = decoded.iter().map(|(l, m)| (l, m.clone())).collect();
        *slot = Box::into_raw(Box::new(McMaskSet { layers }));
        Ok(())
    })
}

/// Keeps the `max(1, round(r·n))` largest-magnitude scores: writes one
/// byte per entry (0 or 1) into `out_bits`.
///
/// # Safety
/// `scores` must be valid for `n` reads and `out_bits` for `n` writes.
#[no_mangle]
pub unsafe extern "C" fn mc_threshold(scores: *const f64, n: usize, r: f64, out_bits: *mut u8) -> McStatus {
    guard(|| {
        let z = slice(scores, n, "scores")?;
        let t = Tensor::new(vec![n], z.to_vec())?;
        let m = threshold_layer(&t, r)?;
        if out_bits.is_null() {
            return Err(null("out_bits"));
        }
        for (i, b) in m.iter().enumerate() {
            *out_bits.add(i) = u8::from(b);
        }
        Ok(())
    })
}

/// Parsed experiment configuration.
pub struct McConfig(RunConfig);

/// Parses configuration text (NUL-terminated UTF-8).
///
/// # Safety
/// `text` must be a valid C string and `out_config` writable.
#[no_mangle]
pub unsafe extern "C" fn mc_config_parse(text: *const c_char, out_config: *mut *mut McConfig) -> McStatus {
    guard(|| {
        let text = cstr(text, "text")?;
        let slot = out(out_config, "out_config")?;
        *slot = Box::into_raw(Box::new(McConfig(parse_config(&text)?)));
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mc_config_set_seed(config: *mut McConfig, seed: u64) -> McStatus {
    guard(|| {
        config.as_mut().ok_or_else(|| null("config"))?.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle and `dir` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn mc_config_set_out_dir(config: *mut McConfig, dir: *const c_char) -> McStatus {
    guard(|| {
        let dir = cstr(dir, "dir")?;
        config.as_mut().ok_or_else(|| null("config"))?.0.out_dir = PathBuf::from(dir);
        Ok(())
    })
}

/// Runs the configured experiment, writing artifacts to its output directory.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mc_config_run(config: *const McConfig, quiet: bool) -> McStatus {
    guard(|| {
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        run_experiment(&c.0, quiet)?;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mc_config_free(config: *mut McConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}
