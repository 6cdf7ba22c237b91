//! C ABI for the maskfuse raster, selection and click-protocol primitives.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns
//! an [`MfStatus`]; on failure, [`mf_last_error`] describes the problem on
//! the calling thread. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use maskfuse::clicks::{parse_clicks, serialize_clicks_text, Click, ClickFormat, ClickSet, Polarity};
use maskfuse::contrastive::{select_masks, ProposalSet};
use maskfuse::raster::{distance_transform, mask_difference};
use maskfuse::tiling::grid_clicks;
use maskfuse::{iou, BinaryMask, Error, ProbabilityMap};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Parse = 4,
    BufferTooSmall = 5,
    Internal = 6,
}

/// Click text dialect accepted by [`mf_clicks_parse`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfClickFormat {
    Text = 0,
    Json = 1,
    Auto = 2,
}

/// Binary raster mask.
pub struct MfMask {
    inner: BinaryMask,
}

/// Ordered positive and negative clicks.
pub struct MfClickSet {
    inner: ClickSet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> MfStatus {
    match err {
        Error::DimensionMismatch { .. } | Error::CountMismatch { .. } => MfStatus::DimensionMismatch,
        Error::Parse { .. } | Error::ClickBudget { .. } => MfStatus::Parse,
        Error::Empty(_) | Error::InvalidArgument(_) => MfStatus::InvalidArgument,
        _ => MfStatus::Internal,
    }
}

struct Fail(MfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MfStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording failures and containing panics.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            MfStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MfStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn boxed_mask(inner: BinaryMask) -> *mut MfMask {
    Box::into_raw(Box::new(MfMask { inner }))
}

fn boxed_clicks(inner: ClickSet) -> *mut MfClickSet {
    Box::into_raw(Box::new(MfClickSet { inner }))
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates an empty `width` x `height` mask.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn mf_mask_new(width: u32, height: u32, out: *mut *mut MfMask) -> MfStatus {
    guard(|| {
        let mask = BinaryMask::new(width, height)?;
        write_out(out, boxed_mask(mask), "out")
    })
}

/// Creates a mask from `width * height` row-major bytes; non-zero is set.
///
/// # Safety
/// `data` must be readable for `len` bytes and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn mf_mask_from_bytes(
    width: u32,
    height: u32,
    data: *const u8,
    len: usize,
    out: *mut *mut MfMask,
) -> MfStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let expected = width as usize * height as usize;
        if len != expected {
            return Err(Fail(MfStatus::DimensionMismatch, format!("{len} bytes for {width}x{height} mask")));
        }
        let bytes = std::slice::from_raw_parts(data, len);
        let mask = BinaryMask::from_bools(width, height, &bytes.iter().map(|&b| b != 0).collect::<Vec<_>>())?;
        write_out(out, boxed_mask(mask), "out")
    })
}

/// # Safety
/// `mask` must come from this library and not have been freed, or be null.
#[no_mangle]
pub unsafe extern "C" fn mf_mask_free(mask: *mut MfMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Width in pixels; 0 for null.
///
/// # Safety
/// `mask` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mf_mask_width(mask: *const MfMask) -> u32 {
    mask.as_ref().map_or(0, |m| m.inner.width())
}

/// Height in pixels; 0 for null.
///
/// # Safety
/// `mask` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mf_mask_height(mask: *const MfMask) -> u32 {
    mask.as_ref().map_or(0, |m| m.inner.height())
}

/// Number of set pixels; 0 for null.
///
/// # Safety
/// `mask` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mf_mask_count(mask: *const MfMask) -> u64 {
    mask.as_ref().map_or(0, |m| m.inner.count() as u64)
}

fn in_bounds(m: &BinaryMask, x: u32, y: u32) -> Result<(), Fail> {
    if x >= m.width() || y >= m.height() {
        return Err(Fail(
            MfStatus::InvalidArgument,
            format!("pixel ({x}, {y}) outside {}x{}", m.width(), m.height()),
        ));
    }
    Ok(())
}

/// # Safety
/// `mask` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn mf_mask_get(mask: *const MfMask, x: u32, y: u32, out: *mut bool) -> MfStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.inner;
        in_bounds(m, x, y)?;
        write_out(out, m.get(x, y), "out")
    })
}

/// # Safety
/// `mask` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_mask_set(mask: *mut MfMask, x: u32, y: u32, value: bool) -> MfStatus {
    guard(|| {
        let m = &mut mask.as_mut().ok_or_else(|| null("mask"))?.inner;
        in_bounds(m, x, y)?;
        m.set(x, y, value);
        Ok(())
    })
}

/// Copies the mask into `out` as row-major 0/1 bytes; `len` must be at least
/// `width * height`.
///
/// # Safety
/// `mask` must be a live handle and `out` writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn mf_mask_to_bytes(mask: *const MfMask, out: *mut u8, len: usize) -> MfStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        if len < m.len() {
            return Err(Fail(MfStatus::BufferTooSmall, format!("need {} bytes, got {len}", m.len())));
        }
        let dst = std::slice::from_raw_parts_mut(out, m.len());
        for (d, b) in dst.iter_mut().zip(m.to_bools()) {
            *d = b as u8;
        }
        Ok(())
    })
}

/// New mask `a | b`.
///
/// # Safety
/// `a`, `b` must be live handles and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn mf_mask_union(a: *const MfMask, b: *const MfMask, out: *mut *mut MfMask) -> MfStatus {
    guard(|| {
        let m = deref(a, "a")?.inner.union(&deref(b, "b")?.inner)?;
        write_out(out, boxed_mask(m), "out")
    })
}

/// New mask `a & !b`.
///
/// # Safety
/// `a`, `b` must be live handles and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn mf_mask_difference(a: *const MfMask, b: *const MfMask, out: *mut *mut MfMask) -> MfStatus {
    guard(|| {
        let m = mask_difference(&deref(a, "a")?.inner, &deref(b, "b")?.inner)?;
        write_out(out, boxed_mask(m), "out")
    })
}

/// Intersection over union; two empty masks give 1.
///
/// # Safety
/// `a`, `b` must be live handles and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn mf_mask_iou(a: *const MfMask, b: *const MfMask, out: *mut f64) -> MfStatus {
    guard(|| {
        let v = iou(&deref(a, "a")?.inner, &deref(b, "b")?.inner)?;
        write_out(out, v, "out")
    })
}

/// Squared Euclidean distance from each pixel to the nearest pixel outside
/// the mask (beyond the frame counts as outside), row-major into `out`.
///
/// # Safety
/// `mask` must be a live handle and `out` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn mf_distance_transform(mask: *const MfMask, out: *mut u32, len: usize) -> MfStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        if len < m.len() {
            return Err(Fail(MfStatus::BufferTooSmall, format!("need {} values, got {len}", m.len())));
        }
        let field = distance_transform(m);
        std::slice::from_raw_parts_mut(out, m.len()).copy_from_slice(field.squared_values());
        Ok(())
    })
}

/// Union of the proposals whose pixels mostly have probability above 0.5.
/// `prob` holds `width * height` row-major values in [0, 1].
///
/// # Safety
/// `prob` must be readable for `width * height` floats, `proposals` for
/// `count` live handles (may be null when `count` is 0), `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mf_select_masks(
    prob: *const f32,
    width: u32,
    height: u32,
    proposals: *const *const MfMask,
    count: usize,
    out: *mut *mut MfMask,
) -> MfStatus {
    guard(|| {
        if prob.is_null() {
            return Err(null("prob"));
        }
        let values = std::slice::from_raw_parts(prob, width as usize * height as usize).to_vec();
        let map = ProbabilityMap::new(width, height, values)?;
        let mut masks = Vec::with_capacity(count);
        if count > 0 {
            if proposals.is_null() {
                return Err(null("proposals"));
            }
            for (i, &p) in std::slice::from_raw_parts(proposals, count).iter().enumerate() {
                masks.push(deref(p, &format!("proposals[{i}]"))?.inner.clone());
            }
        }
        let set = ProposalSet::new(width, height, masks, 0)?;
        write_out(out, boxed_mask(select_masks(&map, &set)?), "out")
    })
}

/// Empty click set.
#[no_mangle]
pub extern "C" fn mf_clickset_new() -> *mut MfClickSet {
    boxed_clicks(ClickSet::new())
}

/// # Safety
/// `clicks` must come from this library and not have been freed, or be null.
#[no_mangle]
pub unsafe extern "C" fn mf_clickset_free(clicks: *mut MfClickSet) {
    if !clicks.is_null() {
        drop(Box::from_raw(clicks));
    }
}

/// Appends a click.
///
/// # Safety
/// `clicks` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_clickset_push(clicks: *mut MfClickSet, x: u32, y: u32, positive: bool) -> MfStatus {
    guard(|| {
        let c = &mut clicks.as_mut().ok_or_else(|| null("clicks"))?.inner;
        c.push(if positive { Click::positive(x, y) } else { Click::negative(x, y) });
        Ok(())
    })
}

/// Total clicks; 0 for null.
///
/// # Safety
/// `clicks` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mf_clickset_len(clicks: *const MfClickSet) -> usize {
    clicks.as_ref().map_or(0, |c| c.inner.len())
}

/// Click `index`, counting positives first and then negatives.
///
/// # Safety
/// `clicks` must be a live handle; `x`, `y`, `positive` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mf_clickset_get(
    clicks: *const MfClickSet,
    index: usize,
    x: *mut u32,
    y: *mut u32,
    positive: *mut bool,
) -> MfStatus {
    guard(|| {
        let c = &deref(clicks, "clicks")?.inner;
        let click = c
            .iter()
            .nth(index)
            .ok_or_else(|| Fail(MfStatus::InvalidArgument, format!("index {index} of {}", c.len())))?;
        write_out(x, click.x, "x")?;
        write_out(y, click.y, "y")?;
        write_out(positive, click.polarity == Polarity::Positive, "positive")
    })
}

/// Uniform `n` x `n` grid of positive clicks over a `width` x `height` image.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn mf_grid_clicks(width: u32, height: u32, n: u32, out: *mut *mut MfClickSet) -> MfStatus {
    guard(|| write_out(out, boxed_clicks(grid_clicks(width, height, n)?), "out"))
}

/// Parses model output into clicks.
///
/// # Safety
/// `text` must be a NUL-terminated UTF-8 string and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn mf_clicks_parse(text: *const c_char, format: MfClickFormat, out: *mut *mut MfClickSet) -> MfStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        let text = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| Fail(MfStatus::Parse, format!("text is not UTF-8: {e}")))?;
        let format = match format {
            MfClickFormat::Text => ClickFormat::Text,
            MfClickFormat::Json => ClickFormat::Json,
            MfClickFormat::Auto => ClickFormat::Auto,
        };
        write_out(out, boxed_clicks(parse_clicks(text, format)?), "out")
    })
}

/// Canonical text form, e.g. `Positive: [(1, 2)], Negative: []`. Release the
/// result with [`mf_string_free`].
///
/// # Safety
/// `clicks` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn mf_clicks_serialize(clicks: *const MfClickSet, out: *mut *mut c_char) -> MfStatus {
    guard(|| {
        let text = serialize_clicks_text(&deref(clicks, "clicks")?.inner);
        let c = CString::new(text).map_err(|e| Fail(MfStatus::Internal, e.to_string()))?;
        write_out(out, c.into_raw(), "out")
    })
}
