//! Running a correctness checker under a deadline.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use linecomp_core::postprocess::{Correctness, CorrectnessChecker};

/// Runs the checker on a helper thread. `None` means the deadline passed;
/// the thread is left to finish on its own. A panicking checker counts as
/// undefined.
pub fn check_with_timeout(
    checker: &Arc<dyn CorrectnessChecker>,
    context: &str,
    suggestion: &str,
    timeout: Duration,
) -> Option<Correctness> {
    let (tx, rx) = mpsc::sync_channel(1);
    let checker = Arc::clone(checker);
    let context = context.to_string();
    let suggestion = suggestion.to_string();
    let spawned = std::thread::Builder::new().name("correctness".into()).spawn(move || {
        let outcome = catch_unwind(AssertUnwindSafe(|| checker.check(&context, &suggestion)))
            .unwrap_or(Correctness::Undefined);
        let _ = tx.send(outcome);
    });
    if spawned.is_err() {
        return Some(Correctness::Undefined);
    }
    rx.recv_timeout(timeout).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use linecomp_core::postprocess::BalanceChecker;

    #[test]
    fn fast_checker_answers() {
        let checker: Arc<dyn CorrectnessChecker> = Arc::new(BalanceChecker);
        let got = check_with_timeout(&checker, "print(x", "))", Duration::from_millis(500));
        assert_eq!(got, Some(Correctness::Incorrect));
    }

    #[test]
    fn slow_checker_times_out() {
        let slow = |_: &str, _: &str| {
            std::thread::sleep(Duration::from_millis(300));
            Correctness::Correct
        };
        let checker: Arc<dyn CorrectnessChecker> = Arc::new(slow);
        assert_eq!(check_with_timeout(&checker, "", "x", Duration::from_millis(20)), None);
    }

    #[test]
    fn panicking_checker_is_undefined() {
        let broken = |_: &str, _: &str| -> Correctness { panic!("checker crashed") };
        let checker: Arc<dyn CorrectnessChecker> = Arc::new(broken);
        let got = check_with_timeout(&checker, "", "x", Duration::from_millis(500));
        assert_eq!(got, Some(Correctness::Undefined));
    }
}
