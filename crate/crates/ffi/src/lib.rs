//! C ABI over `uas-core`.
//!
//! Every fallible function returns a [`UasStatus`]. On failure the message
//! is available from [`uas_last_error_message`] on the same thread until the
//! next call. Strings handed out by this library must be released with
//! [`uas_string_free`]; ontology handles with [`uas_ontology_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use uas_core::audit::{consensus, wilson_interval, AuditVerdict, Consensus};
use uas_core::qa::{serialize_chat, QaGenConfig, QaGenerator, TemplateBank};
use uas_core::schema::{parse_uas, serialize_canonical, CorpusEntry, Ontology, ParseMode};
use uas_core::validation::{AlignmentThresholds, ValidationError, Validator};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UasStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidArgument = 4,
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UasVerdict {
    Correct = 0,
    Incorrect = 1,
    Unsure = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UasConsensus {
    Correct = 0,
    NotCorrect = 1,
    Pending = 2,
}

/// Opaque ontology handle.
pub struct UasOntology(Ontology);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `body`, converting panics into `Internal`.
fn guard(body: impl FnOnce() -> Result<(), (UasStatus, String)>) -> UasStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => UasStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            UasStatus::Internal
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, (UasStatus, String)> {
    if p.is_null() {
        return Err((UasStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (UasStatus::InvalidUtf8, format!("{name}: {e}")))
}

fn out_ptr<T>(p: *mut T, name: &str) -> Result<(), (UasStatus, String)> {
    if p.is_null() {
        Err((UasStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn to_c(s: String) -> Result<*mut c_char, (UasStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (UasStatus::Internal, "output contains a NUL byte".to_string()))
}

fn ontology_ref<'a>(p: *const UasOntology) -> &'a Ontology {
    static DEFAULT: std::sync::OnceLock<Ontology> = std::sync::OnceLock::new();
    if p.is_null() {
        DEFAULT.get_or_init(Ontology::default)
    } else {
        unsafe { &(*p).0 }
    }
}

/// Last error on this thread, or null. Valid until the next call into the
/// library on this thread; do not free.
#[no_mangle]
pub extern "C" fn uas_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn uas_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The built-in ontology. Never null.
#[no_mangle]
pub extern "C" fn uas_ontology_default() -> *mut UasOntology {
    Box::into_raw(Box::new(UasOntology(Ontology::default())))
}

/// Loads an ontology from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uas_ontology_from_toml(toml: *const c_char, out: *mut *mut UasOntology) -> UasStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let text = read_str(toml, "toml")?;
        let ontology = Ontology::from_toml(text).map_err(|e| (UasStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(UasOntology(ontology)));
        Ok(())
    })
}

/// # Safety
/// `ontology` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn uas_ontology_free(ontology: *mut UasOntology) {
    if !ontology.is_null() {
        drop(Box::from_raw(ontology));
    }
}

/// Strictly parses a UAS document and writes its canonical serialization.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uas_canonicalize(json: *const c_char, out: *mut *mut c_char) -> UasStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let record = parse_uas(read_str(json, "json")?).map_err(|e| (UasStatus::ParseError, e.to_string()))?;
        *out = to_c(serialize_canonical(&record))?;
        Ok(())
    })
}

/// Validates one manifest entry (with `uas`) under the default thresholds
/// and writes the report JSON. A rejected entry still returns `Ok`; read
/// the `verdict` field. A null ontology selects the built-in one.
///
/// # Safety
/// `entry_json` must be a NUL-terminated string; `ontology` null or live;
/// `report_out` writable.
#[no_mangle]
pub unsafe extern "C" fn uas_validate_entry_json(
    ontology: *const UasOntology,
    entry_json: *const c_char,
    report_out: *mut *mut c_char,
) -> UasStatus {
    guard(|| {
        out_ptr(report_out, "report_out")?;
        let entry = CorpusEntry::from_json(read_str(entry_json, "entry_json")?, ParseMode::Strict)
            .map_err(|e| (UasStatus::ParseError, e))?;
        let validator = Validator::new(ontology_ref(ontology).clone(), AlignmentThresholds::default(), ParseMode::Strict);
        let report = match validator.validate(&entry) {
            Ok(r) => r,
            Err(e @ (ValidationError::MissingUas(_) | ValidationError::MissingGroundTruth(_))) => {
                return Err((UasStatus::InvalidArgument, e.to_string()))
            }
            Err(e) => return Err((UasStatus::Internal, e.to_string())),
        };
        let text = serde_json::to_string(&report).map_err(|e| (UasStatus::Internal, e.to_string()))?;
        *report_out = to_c(text)?;
        Ok(())
    })
}

/// Wilson score interval. Pass `z <= 0` for the 95% default.
///
/// # Safety
/// `lower` and `upper` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uas_wilson_interval(
    successes: u64,
    n: u64,
    z: f64,
    lower: *mut f64,
    upper: *mut f64,
) -> UasStatus {
    guard(|| {
        out_ptr(lower, "lower")?;
        out_ptr(upper, "upper")?;
        let z = if z > 0.0 { z } else { uas_core::audit::DEFAULT_Z };
        let (lo, hi) = wilson_interval(successes, n, z).map_err(|e| (UasStatus::InvalidArgument, e.to_string()))?;
        *lower = lo;
        *upper = hi;
        Ok(())
    })
}

/// Three-annotator majority over `len` verdicts.
///
/// # Safety
/// `verdicts` must point to `len` readable values (may be null when `len`
/// is 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uas_consensus(verdicts: *const UasVerdict, len: usize, out: *mut UasConsensus) -> UasStatus {
    guard(|| {
        out_ptr(out, "out")?;
        if verdicts.is_null() && len > 0 {
            return Err((UasStatus::NullArgument, "verdicts is null".into()));
        }
        let raw: &[i32] = if len == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(verdicts.cast::<i32>(), len)
        };
        let verdicts = raw
            .iter()
            .map(|&v| match v {
                0 => Ok(AuditVerdict::Correct),
                1 => Ok(AuditVerdict::Incorrect),
                2 => Ok(AuditVerdict::Unsure),
                other => Err((UasStatus::InvalidArgument, format!("unknown verdict {other}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        *out = match consensus(&verdicts) {
            Consensus::Correct => UasConsensus::Correct,
            Consensus::NotCorrect => UasConsensus::NotCorrect,
            Consensus::Pending => UasConsensus::Pending,
        };
        Ok(())
    })
}

/// Template QA items for one record as chat-format JSON-Lines.
///
/// # Safety
/// String arguments must be NUL-terminated; `ontology` null or live; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn uas_qa_generate(
    ontology: *const UasOntology,
    record_id: *const c_char,
    uas_json: *const c_char,
    seed: u64,
    items_per_record: u32,
    options_per_mcq: u32,
    out: *mut *mut c_char,
) -> UasStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let id = read_str(record_id, "record_id")?;
        let record = parse_uas(read_str(uas_json, "uas_json")?).map_err(|e| (UasStatus::ParseError, e.to_string()))?;
        let config = QaGenConfig {
            rng_seed: seed,
            items_per_record: items_per_record as usize,
            options_per_mcq: options_per_mcq as usize,
            ..QaGenConfig::default()
        };
        let generator = QaGenerator::new(ontology_ref(ontology).clone(), TemplateBank::default(), config)
            .map_err(|e| (UasStatus::InvalidArgument, e.to_string()))?;
        let mut lines = String::new();
        for item in generator.generate(id, &record) {
            lines.push_str(&serialize_chat(&item));
            lines.push('\n');
        }
        *out = to_c(lines)?;
        Ok(())
    })
}
