//! C ABI over the nerfseg pipeline.
//!
//! Every function returns an [`NsStatus`]; on failure the message is kept
//! per thread and can be read with [`ns_last_error`]. Objects cross the
//! boundary as opaque handles that the caller frees with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use nerfseg::checkpoint::{load_checkpoint, save_checkpoint};
use nerfseg::cloud::{LabeledPointCloud, SourceTag};
use nerfseg::cluster::count_cloud;
use nerfseg::config::PipelineConfig;
use nerfseg::pipeline::{self, OutputDir};
use nerfseg::ply::{read_ply, write_ply};
use nerfseg::render::{render_color, RadianceField, Ray, RenderConfig};
use nerfseg::{Checkpoint, Error, Stage, Vec3};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    Mismatch = 6,
    NonFinite = 7,
    Missing = 8,
    Panic = 9,
}

/// Pipeline stage run by [`ns_run_stage`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsStage {
    Synth = 0,
    Train = 1,
    Finetune = 2,
    Joint = 3,
    Sa3d = 4,
    Extract = 5,
    Cluster = 6,
    DensityDiff = 7,
    Eval = 8,
}

/// Training stage recorded in a checkpoint.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsCheckpointStage {
    Stage1Rgb = 0,
    Stage2Mask = 1,
    Joint = 2,
}

/// Pipeline configuration.
pub struct NsConfig {
    inner: PipelineConfig,
}

/// Trained field with its sampling bounds.
pub struct NsCheckpoint {
    inner: Checkpoint,
}

/// Point cloud with per-point labels and cluster ids.
pub struct NsCloud {
    inner: LabeledPointCloud,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> NsStatus {
    match e {
        Error::Io { .. } => NsStatus::Io,
        Error::InvalidArgument(_) | Error::InfeasibleSpec(_) | Error::DegenerateCamera(_) | Error::EmptyDataset => {
            NsStatus::InvalidArgument
        }
        Error::Manifest(_)
        | Error::Image { .. }
        | Error::NonBinaryMask { .. }
        | Error::UndeclaredLevel { .. }
        | Error::Checkpoint(_)
        | Error::Ply(_)
        | Error::Csv(_)
        | Error::Json(_) => NsStatus::Format,
        Error::Config(_) => NsStatus::Config,
        Error::Resolution(_)
        | Error::ArchitectureMismatch(_)
        | Error::StageMismatch { .. }
        | Error::Shape(_)
        | Error::BoundsMismatch(_) => NsStatus::Mismatch,
        Error::NonFinite(_) | Error::NonFiniteGradient { .. } => NsStatus::NonFinite,
        Error::Missing { .. } => NsStatus::Missing,
    }
}

struct Fail(NsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            NsStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(NsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn string_arg(s: *const c_char, what: &str) -> Result<String, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(NsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn path_arg(s: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    string_arg(s, what).map(PathBuf::from)
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    let out = deref_mut(out, "out")?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn points_of(xyz: &[f64]) -> Result<Vec<Vec3>, Fail> {
    if xyz.iter().any(|v| !v.is_finite()) {
        return Err(Fail(NsStatus::NonFinite, "coordinates must be finite".into()));
    }
    Ok(xyz.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ns_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ns_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ns_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates the default configuration.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ns_config_default(out: *mut *mut NsConfig) -> NsStatus {
    guard(|| emit(out, NsConfig { inner: PipelineConfig::default() }))
}

/// Reads a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ns_config_load(path: *const c_char, out: *mut *mut NsConfig) -> NsStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let inner = PipelineConfig::load(&path)?;
        inner.validate()?;
        emit(out, NsConfig { inner })
    })
}

/// Applies one `section.key=value` override.
///
/// # Safety
/// `config` must be a live handle and `assignment` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ns_config_set(config: *mut NsConfig, assignment: *const c_char) -> NsStatus {
    guard(|| {
        let config = deref_mut(config, "config")?;
        let assignment = string_arg(assignment, "assignment")?;
        config.inner.set(&assignment)?;
        Ok(())
    })
}

/// Sets every RNG seed in the configuration.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_config_set_seed(config: *mut NsConfig, seed: u64) -> NsStatus {
    guard(|| {
        deref_mut(config, "config")?.inner.set_seed(seed);
        Ok(())
    })
}

/// Serializes the configuration; free the result with [`ns_string_free`].
///
/// # Safety
/// `config` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ns_config_to_json(config: *const NsConfig, out: *mut *mut c_char) -> NsStatus {
    guard(|| {
        let config = deref(config, "config")?;
        let out = deref_mut(out, "out")?;
        let text = CString::new(config.inner.to_json()).map_err(|e| Fail(NsStatus::Format, e.to_string()))?;
        *out = text.into_raw();
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ns_config_free(config: *mut NsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs one pipeline stage against an output directory, exactly as the
/// matching command-line subcommand does.
///
/// # Safety
/// `config` must be a live handle and `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ns_run_stage(config: *const NsConfig, out_dir: *const c_char, stage: NsStage) -> NsStatus {
    guard(|| {
        let config = &deref(config, "config")?.inner;
        let out = OutputDir::new(path_arg(out_dir, "out_dir")?);
        match stage {
            NsStage::Synth => pipeline::run_synth(config, &out).map(drop),
            NsStage::Train => pipeline::run_train(config, &out).map(drop),
            NsStage::Finetune => pipeline::run_finetune(config, &out).map(drop),
            NsStage::Joint => pipeline::run_joint(config, &out).map(drop),
            NsStage::Sa3d => pipeline::run_sa3d(config, &out).map(drop),
            NsStage::Extract => pipeline::run_extract(config, &out).map(drop),
            NsStage::Cluster => pipeline::run_cluster(config, &out).map(drop),
            NsStage::DensityDiff => pipeline::run_density_diff(config, &out).map(drop),
            NsStage::Eval => pipeline::run_eval(config, &out).map(drop),
        }?;
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ns_checkpoint_load(path: *const c_char, out: *mut *mut NsCheckpoint) -> NsStatus {
    guard(|| {
        let inner = load_checkpoint(&path_arg(path, "path")?, None)?;
        emit(out, NsCheckpoint { inner })
    })
}

/// # Safety
/// `checkpoint` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ns_checkpoint_save(checkpoint: *const NsCheckpoint, path: *const c_char) -> NsStatus {
    guard(|| {
        let ck = deref(checkpoint, "checkpoint")?;
        save_checkpoint(&ck.inner, &path_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `checkpoint` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ns_checkpoint_free(checkpoint: *mut NsCheckpoint) {
    if !checkpoint.is_null() {
        drop(Box::from_raw(checkpoint));
    }
}

/// Stage tag, parameter count, mask-head flag and near/far of a checkpoint.
/// Any output pointer may be null.
///
/// # Safety
/// `checkpoint` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_checkpoint_info(
    checkpoint: *const NsCheckpoint,
    stage: *mut NsCheckpointStage,
    param_count: *mut usize,
    has_mask: *mut bool,
    near: *mut f64,
    far: *mut f64,
) -> NsStatus {
    guard(|| {
        let ck = &deref(checkpoint, "checkpoint")?.inner;
        if let Some(s) = stage.as_mut() {
            *s = match ck.stage {
                Stage::Stage1Rgb => NsCheckpointStage::Stage1Rgb,
                Stage::Stage2Mask => NsCheckpointStage::Stage2Mask,
                Stage::Joint => NsCheckpointStage::Joint,
            };
        }
        if let Some(p) = param_count.as_mut() {
            *p = ck.params.len();
        }
        if let Some(m) = has_mask.as_mut() {
            *m = ck.params.has_mask();
        }
        if let Some(n) = near.as_mut() {
            *n = ck.near;
        }
        if let Some(f) = far.as_mut() {
            *f = ck.far;
        }
        Ok(())
    })
}

/// Evaluates the field at `n` points. `points` and `dirs` hold `3n`
/// doubles, directions must be unit length. Writes `3n` colours and `n`
/// densities; `mask` (n values) may be null and is required to be null for
/// fields without a mask head.
///
/// # Safety
/// Every non-null buffer must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn ns_checkpoint_query(
    checkpoint: *const NsCheckpoint,
    points: *const f64,
    dirs: *const f64,
    n: usize,
    rgb: *mut f32,
    sigma: *mut f32,
    mask: *mut f32,
) -> NsStatus {
    guard(|| {
        let ck = &deref(checkpoint, "checkpoint")?.inner;
        let xs = slice_arg(points, 3 * n, "points")?;
        let ds = slice_arg(dirs, 3 * n, "dirs")?;
        let rgb = slice_out(rgb, 3 * n, "rgb")?;
        let sigma = slice_out(sigma, n, "sigma")?;
        if !mask.is_null() && !ck.params.has_mask() {
            return Err(Fail(NsStatus::Mismatch, "field has no mask head".into()));
        }
        if xs.iter().chain(ds).any(|v| !v.is_finite()) {
            return Err(Fail(NsStatus::NonFinite, "query inputs must be finite".into()));
        }
        let mut p = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for (x, v) in xs.chunks_exact(3).zip(ds.chunks_exact(3)) {
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Fail(NsStatus::InvalidArgument, format!("direction must be unit length, |d| = {norm}")));
            }
            p.push([x[0] as f32, x[1] as f32, x[2] as f32]);
            d.push([v[0] as f32, v[1] as f32, v[2] as f32]);
        }
        let out = ck.params.query(&p, &d);
        rgb.copy_from_slice(&out.rgb);
        sigma.copy_from_slice(&out.sigma);
        if let (Some(m), Some(values)) = (mask.as_mut(), out.mask) {
            std::slice::from_raw_parts_mut(m, n).copy_from_slice(&values);
        }
        Ok(())
    })
}

/// Renders `n` rays between the checkpoint's near and far planes.
/// `origins` and `dirs` hold `3n` doubles, `background` 3 doubles, and
/// `rgb` receives `3n` doubles.
///
/// # Safety
/// Every buffer must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn ns_checkpoint_render(
    checkpoint: *const NsCheckpoint,
    origins: *const f64,
    dirs: *const f64,
    n: usize,
    samples_per_ray: usize,
    background: *const f64,
    rgb: *mut f64,
) -> NsStatus {
    guard(|| {
        let ck = &deref(checkpoint, "checkpoint")?.inner;
        let os = points_of(slice_arg(origins, 3 * n, "origins")?)?;
        let ds = points_of(slice_arg(dirs, 3 * n, "dirs")?)?;
        let bg = slice_arg(background, 3, "background")?;
        let rgb = slice_out(rgb, 3 * n, "rgb")?;
        let config = RenderConfig {
            samples_per_ray,
            jitter: false,
            background: [bg[0], bg[1], bg[2]],
        };
        config.validate()?;
        for (i, (o, d)) in os.iter().zip(&ds).enumerate() {
            let norm = d.norm();
            if norm == 0.0 {
                return Err(Fail(NsStatus::InvalidArgument, format!("ray {i} has a zero direction")));
            }
            let ray = Ray {
                origin: *o,
                dir: d / norm,
                near: ck.near,
                far: ck.far,
            };
            rgb[3 * i..3 * i + 3].copy_from_slice(&render_color(&ck.params, &ray, &config));
        }
        Ok(())
    })
}

/// Builds an unlabeled cloud from `3n` coordinates.
///
/// # Safety
/// `xyz` must hold `3n` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_cloud_from_points(xyz: *const f64, n: usize, out: *mut *mut NsCloud) -> NsStatus {
    guard(|| {
        let points = points_of(slice_arg(xyz, 3 * n, "xyz")?)?;
        let inner = LabeledPointCloud::from_points(points, SourceTag::Invnerf);
        emit(out, NsCloud { inner })
    })
}

/// Reads a PLY point cloud.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ns_cloud_load_ply(path: *const c_char, out: *mut *mut NsCloud) -> NsStatus {
    guard(|| {
        let inner = read_ply(&path_arg(path, "path")?)?;
        emit(out, NsCloud { inner })
    })
}

/// # Safety
/// `cloud` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ns_cloud_save_ply(cloud: *const NsCloud, path: *const c_char) -> NsStatus {
    guard(|| {
        let cloud = deref(cloud, "cloud")?;
        write_ply(&cloud.inner, &path_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `cloud` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ns_cloud_free(cloud: *mut NsCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_cloud_len(cloud: *const NsCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.inner.len())
}

/// Copies coordinates, labels and cluster ids into caller buffers of
/// `3 * capacity`, `capacity` and `capacity` elements. Any buffer may be
/// null. Fails when `capacity` is smaller than the cloud.
///
/// # Safety
/// `cloud` must be a live handle; non-null buffers must hold the stated
/// number of elements.
#[no_mangle]
pub unsafe extern "C" fn ns_cloud_copy(
    cloud: *const NsCloud,
    capacity: usize,
    xyz: *mut f64,
    labels: *mut u32,
    cluster_ids: *mut i64,
) -> NsStatus {
    guard(|| {
        let c = &deref(cloud, "cloud")?.inner;
        let n = c.len();
        if capacity < n {
            return Err(Fail(NsStatus::InvalidArgument, format!("capacity {capacity} is below cloud size {n}")));
        }
        if !xyz.is_null() {
            let out = std::slice::from_raw_parts_mut(xyz, 3 * n);
            for (o, p) in out.chunks_exact_mut(3).zip(&c.points) {
                o.copy_from_slice(p.as_slice());
            }
        }
        if !labels.is_null() {
            std::slice::from_raw_parts_mut(labels, n).copy_from_slice(&c.labels);
        }
        if !cluster_ids.is_null() {
            std::slice::from_raw_parts_mut(cluster_ids, n).copy_from_slice(&c.cluster_ids);
        }
        Ok(())
    })
}

/// Runs the counting pipeline with the configuration's cluster settings.
/// Writes the predicted count and, when `clustered` is non-null, a new
/// cloud carrying each surviving point's cluster id.
///
/// # Safety
/// `cloud` and `config` must be live handles; `count` must be writable and
/// `clustered` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ns_count(
    cloud: *const NsCloud,
    config: *const NsConfig,
    count: *mut usize,
    clustered: *mut *mut NsCloud,
) -> NsStatus {
    guard(|| {
        let cloud = deref(cloud, "cloud")?;
        let config = deref(config, "config")?;
        let count = deref_mut(count, "count")?;
        let (out, report) = count_cloud(&cloud.inner, &config.inner.cluster)?;
        *count = report.predicted_count;
        if !clustered.is_null() {
            emit(clustered, NsCloud { inner: out })?;
        }
        Ok(())
    })
}
