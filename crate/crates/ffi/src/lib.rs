//! C ABI for loading, rendering, querying and editing semantic Gaussian
//! scenes.
//!
//! Every fallible function returns a [`SemsplatStatus`]; on failure the
//! message is available from [`semsplat_last_error`] on the same thread.
//! Scenes and query results are opaque handles released with their `_free`
//! function. Panics are caught at the boundary and reported as
//! [`SemsplatStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use semsplat::edit::{delete, recolor, select_by_label, translate};
use semsplat::io::{load_checkpoint, save_checkpoint};
use semsplat::semantics::{resolve_query, QueryResult};
use semsplat::{render, Camera, Error, Scene};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemsplatStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, wrong buffer size or out-of-range value.
    InvalidArgument = 1,
    Io = 2,
    /// A file was read but its contents are malformed.
    Format = 3,
    Config = 4,
    EncoderUnavailable = 5,
    Encoder = 6,
    Panic = 7,
}

impl From<&Error> for SemsplatStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter(_) => SemsplatStatus::InvalidArgument,
            Error::Config(_) => SemsplatStatus::Config,
            Error::EncoderUnavailable(_) => SemsplatStatus::EncoderUnavailable,
            Error::Encoder(_) => SemsplatStatus::Encoder,
            Error::Io { .. } => SemsplatStatus::Io,
            _ => SemsplatStatus::Format,
        }
    }
}

/// Opaque scene handle.
pub struct SemsplatScene {
    scene: Scene<f32>,
    labels: Vec<CString>,
}

impl SemsplatScene {
    fn new(scene: Scene<f32>) -> Self {
        let labels = label_strings(&scene);
        SemsplatScene { scene, labels }
    }
}

fn label_strings(scene: &Scene<f32>) -> Vec<CString> {
    scene
        .dictionary
        .labels()
        .iter()
        .map(|l| CString::new(l.as_str()).unwrap_or_default())
        .collect()
}

/// Opaque query result handle.
pub struct SemsplatQuery {
    result: QueryResult,
    labels: Vec<CString>,
}

/// Pinhole camera; `world_to_camera` is a row-major 4×4 matrix with OpenCV
/// axes (x right, y down, z forward).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SemsplatCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub world_to_camera: [f64; 16],
}

impl SemsplatCamera {
    fn to_camera(self) -> semsplat::Result<Camera> {
        let m = std::array::from_fn(|r| std::array::from_fn(|c| self.world_to_camera[4 * r + c]));
        Camera::new(self.fx, self.fy, self.cx, self.cy, self.width as usize, self.height as usize, m)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(SemsplatStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail((&e).into(), format!("{} [{}]", e, e.kind()))
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(SemsplatStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording any error or panic for [`semsplat_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SemsplatStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            SemsplatStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SemsplatStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| invalid(format!("{name} is null")))
}

unsafe fn mut_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| invalid(format!("{name} is null")))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, want: usize, name: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(invalid(format!("{name} is null")));
    }
    if len != want {
        return Err(invalid(format!("{name} holds {len} elements, expected {want}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn semsplat_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn semsplat_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint into a new scene handle stored in `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn semsplat_scene_load(path: *const c_char, out: *mut *mut SemsplatScene) -> SemsplatStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = ptr::null_mut();
        let scene = load_checkpoint(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(SemsplatScene::new(scene)));
        Ok(())
    })
}

/// Writes the scene to `path` atomically.
///
/// # Safety
/// `scene` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn semsplat_scene_save(scene: *const SemsplatScene, path: *const c_char) -> SemsplatStatus {
    guard(|| {
        let s = ref_arg(scene, "scene")?;
        save_checkpoint(&s.scene, Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Copies a scene.
///
/// # Safety
/// `scene` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn semsplat_scene_clone(
    scene: *const SemsplatScene,
    out: *mut *mut SemsplatScene,
) -> SemsplatStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        let s = ref_arg(scene, "scene")?;
        *out = Box::into_raw(Box::new(SemsplatScene::new(s.scene.clone())));
        Ok(())
    })
}

/// Releases a scene handle. Null is ignored.
///
/// # Safety
/// `scene` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semsplat_scene_free(scene: *mut SemsplatScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Number of Gaussians.
///
/// # Safety
/// `scene` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn semsplat_scene_len(scene: *const SemsplatScene, out: *mut usize) -> SemsplatStatus {
    guard(|| {
        *mut_arg(out, "out")? = ref_arg(scene, "scene")?.scene.len();
        Ok(())
    })
}

/// Number of dictionary labels (classes excluding "undetected").
///
/// # Safety
/// `scene` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn semsplat_scene_num_labels(scene: *const SemsplatScene, out: *mut usize) -> SemsplatStatus {
    guard(|| {
        *mut_arg(out, "out")? = ref_arg(scene, "scene")?.labels.len();
        Ok(())
    })
}

/// Dictionary label `index` (0-based). The string is owned by the scene and
/// valid until the scene is edited or freed.
///
/// # Safety
/// `scene` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn semsplat_scene_label(
    scene: *const SemsplatScene,
    index: usize,
    out: *mut *const c_char,
) -> SemsplatStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        let s = ref_arg(scene, "scene")?;
        let l = s
            .labels
            .get(index)
            .ok_or_else(|| invalid(format!("label index {index} out of range 0..{}", s.labels.len())))?;
        *out = l.as_ptr();
        Ok(())
    })
}

/// Embedding dimension of the scene's label table.
///
/// # Safety
/// `scene` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn semsplat_scene_embedding_dim(scene: *const SemsplatScene, out: *mut usize) -> SemsplatStatus {
    guard(|| {
        *mut_arg(out, "out")? = ref_arg(scene, "scene")?.scene.embeddings.dim();
        Ok(())
    })
}

/// Renders RGB into `rgb` (row-major `height × width × 3`, `len` floats).
///
/// # Safety
/// `scene` must be a live handle, `camera` readable and `rgb` writable for
/// `len` floats.
#[no_mangle]
pub unsafe extern "C" fn semsplat_render(
    scene: *const SemsplatScene,
    camera: *const SemsplatCamera,
    rgb: *mut f32,
    len: usize,
) -> SemsplatStatus {
    guard(|| {
        let s = ref_arg(scene, "scene")?;
        let cam = ref_arg(camera, "camera")?.to_camera()?;
        let dst = out_slice(rgb, len, cam.width * cam.height * 3, "rgb")?;
        dst.copy_from_slice(&render(&s.scene, &cam).color);
        Ok(())
    })
}

/// Resolves a query embedding (`dim` floats, unit norm) against the scene as
/// seen from `camera`. Labels with relevancy strictly above `threshold` are
/// ranked in `*out`.
///
/// # Safety
/// `scene` must be a live handle, `prompt` a NUL-terminated string,
/// `embedding` readable for `dim` floats, `camera` readable and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn semsplat_query(
    scene: *const SemsplatScene,
    prompt: *const c_char,
    embedding: *const f32,
    dim: usize,
    camera: *const SemsplatCamera,
    threshold: f64,
    out: *mut *mut SemsplatQuery,
) -> SemsplatStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = ptr::null_mut();
        let s = ref_arg(scene, "scene")?;
        let prompt = str_arg(prompt, "prompt")?;
        if embedding.is_null() {
            return Err(invalid("embedding is null"));
        }
        let emb = std::slice::from_raw_parts(embedding, dim);
        let cam = ref_arg(camera, "camera")?.to_camera()?;
        let result = resolve_query(&s.scene, prompt, emb, &cam, threshold)?;
        let labels = result
            .ranked
            .iter()
            .map(|r| CString::new(r.label.as_str()).unwrap_or_default())
            .collect();
        *out = Box::into_raw(Box::new(SemsplatQuery { result, labels }));
        Ok(())
    })
}

/// Releases a query result. Null is ignored.
///
/// # Safety
/// `query` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semsplat_query_free(query: *mut SemsplatQuery) {
    if !query.is_null() {
        drop(Box::from_raw(query));
    }
}

/// Number of ranked labels.
///
/// # Safety
/// `query` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn semsplat_query_count(query: *const SemsplatQuery, out: *mut usize) -> SemsplatStatus {
    guard(|| {
        *mut_arg(out, "out")? = ref_arg(query, "query")?.result.ranked.len();
        Ok(())
    })
}

/// Label, relevancy and number of Gaussians of ranked entry `rank`. The
/// label string lives as long as the query handle.
///
/// # Safety
/// `query` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn semsplat_query_entry(
    query: *const SemsplatQuery,
    rank: usize,
    label: *mut *const c_char,
    relevancy: *mut f64,
    num_gaussians: *mut usize,
) -> SemsplatStatus {
    guard(|| {
        let q = ref_arg(query, "query")?;
        let (label, relevancy, num_gaussians) = (
            mut_arg(label, "label")?,
            mut_arg(relevancy, "relevancy")?,
            mut_arg(num_gaussians, "num_gaussians")?,
        );
        let r = q
            .result
            .ranked
            .get(rank)
            .ok_or_else(|| invalid(format!("rank {rank} out of range 0..{}", q.labels.len())))?;
        *label = q.labels[rank].as_ptr();
        *relevancy = r.relevancy;
        *num_gaussians = r.gaussian_ids.len();
        Ok(())
    })
}

/// Writes the pixel mask of entry `rank` as 0/1 bytes (`width × height`).
///
/// # Safety
/// `query` must be a live handle and `mask` writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn semsplat_query_mask(
    query: *const SemsplatQuery,
    rank: usize,
    mask: *mut u8,
    len: usize,
) -> SemsplatStatus {
    guard(|| {
        let q = ref_arg(query, "query")?;
        let r = q
            .result
            .ranked
            .get(rank)
            .ok_or_else(|| invalid(format!("rank {rank} out of range 0..{}", q.labels.len())))?;
        let dst = out_slice(mask, len, r.pixel_mask.len(), "mask")?;
        for (d, m) in dst.iter_mut().zip(&r.pixel_mask) {
            *d = u8::from(*m);
        }
        Ok(())
    })
}

unsafe fn edit_label(
    scene: *mut SemsplatScene,
    label: *const c_char,
    affected: *mut usize,
    apply: impl FnOnce(&mut Scene<f32>, &[usize]) -> semsplat::Result<()>,
) -> SemsplatStatus {
    guard(|| {
        let s = mut_arg(scene, "scene")?;
        let ids = select_by_label(&s.scene, str_arg(label, "label")?)?;
        apply(&mut s.scene, &ids)?;
        s.labels = label_strings(&s.scene);
        if let Some(a) = affected.as_mut() {
            *a = ids.len();
        }
        Ok(())
    })
}

/// Sets the view-independent color of every Gaussian of `label`. The count
/// of edited Gaussians goes to `*affected` when it is not null.
///
/// # Safety
/// `scene` must be a live handle and `label` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn semsplat_edit_recolor(
    scene: *mut SemsplatScene,
    label: *const c_char,
    r: f32,
    g: f32,
    b: f32,
    affected: *mut usize,
) -> SemsplatStatus {
    edit_label(scene, label, affected, |s, ids| recolor(s, ids, [r, g, b]))
}

/// Removes every Gaussian of `label`.
///
/// # Safety
/// `scene` must be a live handle and `label` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn semsplat_edit_delete(
    scene: *mut SemsplatScene,
    label: *const c_char,
    affected: *mut usize,
) -> SemsplatStatus {
    edit_label(scene, label, affected, |s, ids| delete(s, ids).map(drop))
}

/// Moves every Gaussian of `label` by `(dx, dy, dz)` in world units.
///
/// # Safety
/// `scene` must be a live handle and `label` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn semsplat_edit_translate(
    scene: *mut SemsplatScene,
    label: *const c_char,
    dx: f32,
    dy: f32,
    dz: f32,
    affected: *mut usize,
) -> SemsplatStatus {
    edit_label(scene, label, affected, |s, ids| translate(s, ids, [dx, dy, dz]))
}
