//! C interface to the designer and the MAP estimator.
//!
//! Every function returns an [`IsacStatus`]; on failure a message is kept per
//! thread and can be copied out with [`isac_last_error`]. Handles are opaque
//! and must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use isac_core::designer::{design, Design, DesignParams, Strategy};
use isac_core::harness::monte_carlo;
use isac_core::scene::{ScenarioConfig, Scene};
use isac_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IsacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    Infeasible = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IsacStrategy {
    Prop = 0,
    Even = 1,
    Heu = 2,
}

impl From<IsacStrategy> for Strategy {
    fn from(s: IsacStrategy) -> Self {
        match s {
            IsacStrategy::Prop => Strategy::Prop,
            IsacStrategy::Even => Strategy::Even,
            IsacStrategy::Heu => Strategy::Heu,
        }
    }
}

/// A validated scenario with its channel realizations.
pub struct IsacScene {
    scene: Scene,
}

/// A finished design: partition, beamformer and its BCRB.
pub struct IsacDesign {
    design: Design,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> IsacStatus {
    match e {
        Error::InvalidConfig(_)
        | Error::Dimension(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::Io(_)
        | Error::NonBinaryPartition { .. } => IsacStatus::InvalidConfig,
        Error::Infeasible(_) | Error::SinrUnreachable { .. } => IsacStatus::Infeasible,
        Error::Singular { .. } | Error::NotHermitian(_) | Error::Numerical(_) => IsacStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (IsacStatus, String)>) -> IsacStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            IsacStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            IsacStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (IsacStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (IsacStatus, String) {
    (IsacStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (IsacStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Builds a scene from a NUL-terminated JSON scenario.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn isac_scene_from_json(json: *const c_char, out: *mut *mut IsacScene) -> IsacStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| (IsacStatus::InvalidConfig, "config is not UTF-8".to_string()))?;
        let cfg = ScenarioConfig::from_json(text).map_err(core_err)?;
        let scene = Scene::from_config(&cfg).map_err(core_err)?;
        *out = Box::into_raw(Box::new(IsacScene { scene }));
        Ok(())
    })
}

/// Releases a scene. Null is ignored.
///
/// # Safety
/// `scene` must come from [`isac_scene_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn isac_scene_free(scene: *mut IsacScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Number of antennas `N`.
///
/// # Safety
/// `scene` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn isac_scene_antennas(scene: *const IsacScene, out: *mut usize) -> IsacStatus {
    guard(|| {
        let s = as_ref(scene, "scene")?;
        *out.as_mut().ok_or_else(|| null("out"))? = s.scene.n;
        Ok(())
    })
}

/// Number of angle parameters (targets, or 2 for an extended target).
///
/// # Safety
/// `scene` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn isac_scene_num_angles(scene: *const IsacScene, out: *mut usize) -> IsacStatus {
    guard(|| {
        let s = as_ref(scene, "scene")?;
        *out.as_mut().ok_or_else(|| null("out"))? = s.scene.priors.n_theta();
        Ok(())
    })
}

/// Designs a partition and beamformer with the scenario's design settings.
///
/// # Safety
/// `scene` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn isac_design(
    scene: *const IsacScene,
    strategy: IsacStrategy,
    out: *mut *mut IsacDesign,
) -> IsacStatus {
    guard(|| {
        let s = as_ref(scene, "scene")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let d = design(&s.scene, strategy.into(), DesignParams::from_scene(&s.scene)).map_err(core_err)?;
        *out = Box::into_raw(Box::new(IsacDesign { design: d }));
        Ok(())
    })
}

/// Releases a design. Null is ignored.
///
/// # Safety
/// `design` must come from [`isac_design`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn isac_design_free(design: *mut IsacDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// Copies the partition (`1` = transmit) into `out[0..N]`.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn isac_design_partition(design: *const IsacDesign, out: *mut f64, len: usize) -> IsacStatus {
    guard(|| {
        let d = &as_ref(design, "design")?.design;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = d.a.len();
        if len < n {
            return Err((IsacStatus::BufferTooSmall, format!("partition needs {n} entries, got {len}")));
        }
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(d.a.as_slice());
        Ok(())
    })
}

/// Mean root BCRB over the angle parameters, in degrees.
///
/// # Safety
/// `design` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn isac_design_root_bcrb_deg(design: *const IsacDesign, out: *mut f64) -> IsacStatus {
    guard(|| {
        let d = &as_ref(design, "design")?.design;
        *out.as_mut().ok_or_else(|| null("out"))? = d.root_bcrb_deg();
        Ok(())
    })
}

/// Shape of `W` (`N x (N + K)`).
///
/// # Safety
/// `rows` and `cols` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn isac_design_beamformer_shape(
    design: *const IsacDesign,
    rows: *mut usize,
    cols: *mut usize,
) -> IsacStatus {
    guard(|| {
        let w = as_ref(design, "design")?.design.w();
        *rows.as_mut().ok_or_else(|| null("rows"))? = w.nrows();
        *cols.as_mut().ok_or_else(|| null("cols"))? = w.ncols();
        Ok(())
    })
}

/// Copies `W` row-major into `re` and `im`, each of `len >= rows * cols`.
///
/// # Safety
/// `re` and `im` must each point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn isac_design_beamformer(
    design: *const IsacDesign,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> IsacStatus {
    guard(|| {
        let w = as_ref(design, "design")?.design.w();
        if re.is_null() || im.is_null() {
            return Err(null("output buffer"));
        }
        let need = w.nrows() * w.ncols();
        if len < need {
            return Err((IsacStatus::BufferTooSmall, format!("beamformer needs {need} entries, got {len}")));
        }
        let (re, im) = (std::slice::from_raw_parts_mut(re, need), std::slice::from_raw_parts_mut(im, need));
        for i in 0..w.nrows() {
            for j in 0..w.ncols() {
                re[i * w.ncols() + j] = w[(i, j)].re;
                im[i * w.ncols() + j] = w[(i, j)].im;
            }
        }
        Ok(())
    })
}

/// Monte Carlo MAP estimation for a design; writes the mean per-parameter
/// RMSE in degrees.
///
/// # Safety
/// Both handles must be live, `design` made from `scene`, and `rmse_deg` valid.
#[no_mangle]
pub unsafe extern "C" fn isac_monte_carlo(
    scene: *const IsacScene,
    design: *const IsacDesign,
    trials: usize,
    seed: u64,
    rmse_deg: *mut f64,
) -> IsacStatus {
    guard(|| {
        let s = &as_ref(scene, "scene")?.scene;
        let d = &as_ref(design, "design")?.design;
        let out = rmse_deg.as_mut().ok_or_else(|| null("rmse_deg"))?;
        if trials == 0 {
            return Err((IsacStatus::InvalidConfig, "trials must be at least 1".into()));
        }
        if d.a.len() != s.n {
            return Err((IsacStatus::InvalidConfig, "design does not belong to this scene".into()));
        }
        *out = monte_carlo(s, &d.a, d.w(), trials, seed).map_err(core_err)?.rmse_deg;
        Ok(())
    })
}

/// Copies the calling thread's last error message, NUL-terminated, into
/// `buf`. With a null `buf`, writes the required size (including the NUL)
/// to `needed` and returns `Ok`.
///
/// # Safety
/// `buf` must point to `len` writable bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn isac_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> IsacStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    let size = msg.len() + 1;
    if let Some(n) = needed.as_mut() {
        *n = size;
    }
    if buf.is_null() {
        return IsacStatus::Ok;
    }
    if len < size {
        return IsacStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, msg.len());
    *buf.add(msg.len()) = 0;
    IsacStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn isac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
