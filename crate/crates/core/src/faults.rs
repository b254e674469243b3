//! Deliberate defects that the verification harness injects to prove that
//! its checks can fail. Production code paths always run with [`Faults::NONE`].

#[doc(hidden)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Faults {
    /// Quadratic constraint uses `-|j5|^2` instead of `+|j5|^2`.
    pub flip_square_sign: bool,
    /// Direct evaluator uses `u_{j2}` where `conj(u_{j2})` belongs.
    pub drop_conjugate: bool,
    /// Replaces the momentum-bracket coefficient.
    pub bracket_factor: Option<f64>,
    /// Lifted buffers only as large as the mode box itself.
    pub undersized_lift: bool,
    /// Prefix-sum Morawetz path evaluates an even kernel.
    pub even_morawetz_kernel: bool,
}

impl Faults {
    pub const NONE: Faults = Faults {
        flip_square_sign: false,
        drop_conjugate: false,
        bracket_factor: None,
        undersized_lift: false,
        even_morawetz_kernel: false,
    };
}
