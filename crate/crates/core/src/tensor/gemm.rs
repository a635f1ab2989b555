//! Thin safe wrappers over `matrixmultiply::dgemm` for the row-major layouts
//! the convolution kernels use.

/// `c = beta * c + a · b` with `a: m×k`, `b: k×n`, `c: m×n`, all row-major.
pub(crate) fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: bounds checked above; strides describe dense row-major storage.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c += a · bᵀ` with `a: m×k`, `b: n×k`, `c: m×n`.
pub(crate) fn gemm_nt_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: as above; bᵀ is expressed through swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = aᵀ · b` with `a: k×m`, `b: k×n`, `c: m×n` (overwritten).
pub(crate) fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: as above; aᵀ is expressed through swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Row-major-agnostic operand: element `(i, j)` sits at
/// `data[offset + i * rs + j * cs]`. Strides may overlap, which is how a
/// sliding window over one signal is viewed as a matrix without copying.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View<'_> {
    fn fits(&self, rows: usize, cols: usize) -> bool {
        rows == 0 || cols == 0 || self.offset + (rows - 1) * self.rs + (cols - 1) * self.cs < self.data.len()
    }
}

/// `c = beta * c + a · b` over arbitrary strides; `c` is `m×n` at
/// `c[offset + i * rsc + j * csc]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_view(m: usize, k: usize, n: usize, a: View, b: View, beta: f64, c: &mut [f64], c_at: (usize, usize, usize)) {
    let (offset, rsc, csc) = c_at;
    assert!(a.fits(m, k) && b.fits(k, n));
    assert!(m == 0 || n == 0 || offset + (m - 1) * rsc + (n - 1) * csc < c.len());
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: every index the kernel touches was bounds-checked above; `c`
    // is uniquely borrowed and never aliases `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr().add(offset),
            rsc as isize,
            csc as isize,
        );
    }
}
