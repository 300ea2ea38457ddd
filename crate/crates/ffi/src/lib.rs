//! C ABI over the frerec core: opaque handles, integer status codes and a
//! per-thread last-error message.
//!
//! Every function returns a [`FrerecStatus`]; outputs go through pointer
//! arguments. Handles are released with the matching `*_free` function,
//! which accepts null.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use frerec::image::{load_image, save_image, Image};
use frerec::rhm::FetModel;
use frerec::shr::{Draws, RealCorpus, ShrParams};
use frerec::spectral::{profile_distance, radial_profile, RadialProfile};
use frerec::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrerecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Format = 5,
    Contract = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

impl From<&Error> for FrerecStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => FrerecStatus::Io,
            Error::Format { .. } | Error::Json(_) => FrerecStatus::Format,
            Error::Shape(_) => FrerecStatus::Shape,
            Error::InvalidArgument(_) => FrerecStatus::InvalidArgument,
            Error::Contract(_) => FrerecStatus::Contract,
            Error::Numerical(_) => FrerecStatus::Numerical,
        }
    }
}

/// An image with values in `[0, 1]`, `[H,W,C]` row-major.
pub struct FrerecImage(Image);

/// A real corpus prepared for high-frequency replacement.
pub struct FrerecCorpus(RealCorpus);

/// A trained reconstruction network.
pub struct FrerecModel(FetModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Fail(FrerecStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(FrerecStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(FrerecStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FrerecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FrerecStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FrerecStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(FrerecStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn frerec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn frerec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `height*width*channels` values from `data` into a new image.
///
/// # Safety
/// `data` must point to that many doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn frerec_image_new(
    height: usize,
    width: usize,
    channels: usize,
    data: *const f64,
    out: *mut *mut FrerecImage,
) -> FrerecStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let n = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Fail(FrerecStatus::InvalidArgument, "dimensions overflow".into()))?;
        let pixels = std::slice::from_raw_parts(data, n).to_vec();
        store(out, FrerecImage(Image::new(height, width, channels, pixels)?))
    })
}

/// Reads a binary PGM or PPM file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn frerec_image_load(path: *const c_char, out: *mut *mut FrerecImage) -> FrerecStatus {
    guard(|| {
        let path = path_arg(path)?;
        store(out, FrerecImage(load_image(path)?))
    })
}

/// Writes a PGM (one channel) or PPM (three channels).
///
/// # Safety
/// `image` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn frerec_image_save(image: *const FrerecImage, path: *const c_char) -> FrerecStatus {
    guard(|| {
        let image = handle(image, "image")?;
        save_image(&image.0, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `image` must be a live handle; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn frerec_image_dims(
    image: *const FrerecImage,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> FrerecStatus {
    guard(|| {
        let image = handle(image, "image")?;
        if height.is_null() || width.is_null() || channels.is_null() {
            return Err(null("output"));
        }
        *height = image.0.height();
        *width = image.0.width();
        *channels = image.0.channels();
        Ok(())
    })
}

/// Copies the pixels into `buffer`, which holds `len` doubles.
///
/// # Safety
/// `image` must be a live handle; `buffer` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn frerec_image_pixels(image: *const FrerecImage, buffer: *mut f64, len: usize) -> FrerecStatus {
    guard(|| {
        let image = handle(image, "image")?;
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        let px = image.0.pixels();
        if len < px.len() {
            return Err(Fail(
                FrerecStatus::BufferTooSmall,
                format!("buffer holds {len} values, image has {}", px.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buffer, px.len()).copy_from_slice(px);
        Ok(())
    })
}

/// # Safety
/// `image` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn frerec_image_free(image: *mut FrerecImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Builds a real corpus from `count` images with mask ratio `ratio`,
/// `k` retrieved neighbors and draw seed `seed`.
///
/// # Safety
/// `images` must point to `count` live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn frerec_corpus_new(
    images: *const *const FrerecImage,
    count: usize,
    ratio: f64,
    k: usize,
    seed: u64,
    out: *mut *mut FrerecCorpus,
) -> FrerecStatus {
    guard(|| {
        if images.is_null() {
            return Err(null("images"));
        }
        let reals = std::slice::from_raw_parts(images, count)
            .iter()
            .map(|&p| handle(p, "image").map(|im| im.0.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let params = ShrParams {
            ratio,
            k,
            seed,
            ..ShrParams::default()
        };
        store(out, FrerecCorpus(RealCorpus::new(&reals, vec![None; count], &params)?))
    })
}

/// High-frequency replacement of `image` with draw stream `draw`.
///
/// # Safety
/// `corpus` and `image` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn frerec_corpus_calibrate(
    corpus: *const FrerecCorpus,
    image: *const FrerecImage,
    draw: u64,
    out: *mut *mut FrerecImage,
) -> FrerecStatus {
    guard(|| {
        let corpus = handle(corpus, "corpus")?;
        let image = handle(image, "image")?;
        let outcome = corpus.0.calibrate(&image.0, Draws::Seeded(draw), None, None)?;
        store(out, FrerecImage(outcome.image))
    })
}

/// # Safety
/// `corpus` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn frerec_corpus_free(corpus: *mut FrerecCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Loads a FREC model container.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn frerec_model_load(path: *const c_char, out: *mut *mut FrerecModel) -> FrerecStatus {
    guard(|| {
        let path = path_arg(path)?;
        store(out, FrerecModel(FetModel::load(path)?))
    })
}

/// Runs the network on `image`, clamping the result to `[0, 1]`.
///
/// # Safety
/// `model` and `image` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn frerec_model_reconstruct(
    model: *const FrerecModel,
    image: *const FrerecImage,
    out: *mut *mut FrerecImage,
) -> FrerecStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let image = handle(image, "image")?;
        store(out, FrerecImage(model.0.reconstruct(&image.0)?))
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn frerec_model_free(model: *mut FrerecModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the radial profile (`side/2` bands) into `buffer` and its length
/// into `written`.
///
/// # Safety
/// `image` must be a live handle; `buffer` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn frerec_radial_profile(
    image: *const FrerecImage,
    buffer: *mut f64,
    len: usize,
    written: *mut usize,
) -> FrerecStatus {
    guard(|| {
        let image = handle(image, "image")?;
        if buffer.is_null() || written.is_null() {
            return Err(null("output"));
        }
        let p = radial_profile(&image.0)?;
        *written = p.values.len();
        if len < p.values.len() {
            return Err(Fail(
                FrerecStatus::BufferTooSmall,
                format!("profile has {} bands, buffer holds {len}", p.values.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buffer, p.values.len()).copy_from_slice(&p.values);
        Ok(())
    })
}

/// Mean absolute difference of two profiles over bands `k >= k_min`.
///
/// # Safety
/// `a` and `b` must each hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn frerec_profile_distance(
    a: *const f64,
    b: *const f64,
    len: usize,
    k_min: usize,
    out: *mut f64,
) -> FrerecStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let profile = |p: *const f64| RadialProfile {
            side: 2 * len,
            values: std::slice::from_raw_parts(p, len).to_vec(),
        };
        *out = profile_distance(&profile(a), &profile(b), k_min)?;
        Ok(())
    })
}
