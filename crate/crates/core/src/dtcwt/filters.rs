//! Kingsbury filter tables: the near-symmetric 13/19-tap first-level pair
//! (`near_sym_b`) and the 14-tap quarter-shift pair (`qshift_b`).

/// First-level analysis low-pass.
pub const NEAR_SYM_H0O: [f64; 13] = [
    -0.0017578125,
    0.0,
    0.022265625,
    -0.046875,
    -0.0482421875,
    0.296875,
    0.55546875,
    0.296875,
    -0.0482421875,
    -0.046875,
    0.022265625,
    0.0,
    -0.0017578125,
];

/// First-level analysis high-pass.
pub const NEAR_SYM_H1O: [f64; 19] = [
    -7.062639508928571e-05,
    0.0,
    0.0013419015066964285,
    -0.0018833705357142855,
    -0.007156808035714285,
    0.023856026785714284,
    0.05564313616071428,
    -0.05168805803571428,
    -0.29975760323660716,
    0.5594308035714286,
    -0.29975760323660716,
    -0.05168805803571428,
    0.05564313616071428,
    0.023856026785714284,
    -0.007156808035714285,
    -0.0018833705357142855,
    0.0013419015066964285,
    0.0,
    -7.062639508928571e-05,
];

/// First-level synthesis low-pass.
pub const NEAR_SYM_G0O: [f64; 19] = [
    7.062639508928571e-05,
    0.0,
    -0.0013419015066964285,
    -0.0018833705357142855,
    0.007156808035714285,
    0.023856026785714284,
    -0.05564313616071428,
    -0.05168805803571428,
    0.29975760323660716,
    0.5594308035714286,
    0.29975760323660716,
    -0.05168805803571428,
    -0.05564313616071428,
    0.023856026785714284,
    0.007156808035714285,
    -0.0018833705357142855,
    -0.0013419015066964285,
    0.0,
    7.062639508928571e-05,
];

/// First-level synthesis high-pass.
pub const NEAR_SYM_G1O: [f64; 13] = [
    -0.0017578125,
    -0.0,
    0.022265625,
    0.046875,
    -0.0482421875,
    -0.296875,
    0.55546875,
    -0.296875,
    -0.0482421875,
    0.046875,
    0.022265625,
    -0.0,
    -0.0017578125,
];

/// Analysis low-pass, tree a.
pub const QSHIFT_H0A: [f64; 14] = [
    0.003253142763653182,
    -0.00388321199915849,
    0.03466034684485349,
    -0.03887280126882779,
    -0.11720388769911527,
    0.27529538466888204,
    0.7561456438925225,
    0.5688104207121227,
    0.011866092033797,
    -0.1067118046866654,
    0.023825384794920298,
    0.01702522388155399,
    -0.005439475937274115,
    -0.004556895628475491,
];

/// Analysis low-pass, tree b.
pub const QSHIFT_H0B: [f64; 14] = [
    -0.004556895628475491,
    -0.005439475937274115,
    0.01702522388155399,
    0.023825384794920298,
    -0.1067118046866654,
    0.011866092033797,
    0.5688104207121227,
    0.7561456438925225,
    0.27529538466888204,
    -0.11720388769911527,
    -0.03887280126882779,
    0.03466034684485349,
    -0.00388321199915849,
    0.003253142763653182,
];

/// Analysis high-pass, tree a.
pub const QSHIFT_H1A: [f64; 14] = [
    -0.004556895628475491,
    0.005439475937274115,
    0.01702522388155399,
    -0.023825384794920298,
    -0.1067118046866654,
    -0.011866092033797,
    0.5688104207121227,
    -0.7561456438925225,
    0.27529538466888204,
    0.11720388769911527,
    -0.03887280126882779,
    -0.03466034684485349,
    -0.00388321199915849,
    -0.003253142763653182,
];

/// Analysis high-pass, tree b.
pub const QSHIFT_H1B: [f64; 14] = [
    -0.003253142763653182,
    -0.00388321199915849,
    -0.03466034684485349,
    -0.03887280126882779,
    0.11720388769911527,
    0.27529538466888204,
    -0.7561456438925225,
    0.5688104207121227,
    -0.011866092033797,
    -0.1067118046866654,
    -0.023825384794920298,
    0.01702522388155399,
    0.005439475937274115,
    -0.004556895628475491,
];

/// Synthesis low-pass, tree a.
pub const QSHIFT_G0A: [f64; 14] = [
    -0.004556895628475491,
    -0.005439475937274115,
    0.01702522388155399,
    0.023825384794920298,
    -0.1067118046866654,
    0.011866092033797,
    0.5688104207121227,
    0.7561456438925225,
    0.27529538466888204,
    -0.11720388769911527,
    -0.03887280126882779,
    0.03466034684485349,
    -0.00388321199915849,
    0.003253142763653182,
];

/// Synthesis low-pass, tree b.
pub const QSHIFT_G0B: [f64; 14] = [
    0.003253142763653182,
    -0.00388321199915849,
    0.03466034684485349,
    -0.03887280126882779,
    -0.11720388769911527,
    0.27529538466888204,
    0.7561456438925225,
    0.5688104207121227,
    0.011866092033797,
    -0.1067118046866654,
    0.023825384794920298,
    0.01702522388155399,
    -0.005439475937274115,
    -0.004556895628475491,
];

/// Synthesis high-pass, tree a.
pub const QSHIFT_G1A: [f64; 14] = [
    -0.003253142763653182,
    -0.00388321199915849,
    -0.03466034684485349,
    -0.03887280126882779,
    0.11720388769911527,
    0.27529538466888204,
    -0.7561456438925225,
    0.5688104207121227,
    -0.011866092033797,
    -0.1067118046866654,
    -0.023825384794920298,
    0.01702522388155399,
    0.005439475937274115,
    -0.004556895628475491,
];

/// Synthesis high-pass, tree b.
pub const QSHIFT_G1B: [f64; 14] = [
    -0.004556895628475491,
    0.005439475937274115,
    0.01702522388155399,
    -0.023825384794920298,
    -0.1067118046866654,
    -0.011866092033797,
    0.5688104207121227,
    -0.7561456438925225,
    0.27529538466888204,
    0.11720388769911527,
    -0.03887280126882779,
    -0.03466034684485349,
    -0.00388321199915849,
    -0.003253142763653182,
];
