//! Bounds-checked wrapper over `matrixmultiply::dgemm`.

/// A strided read-only matrix view.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    /// Row-major contiguous matrix with `cols` columns.
    pub fn rows(data: &'a [f64], cols: usize) -> Self {
        Self { data, offset: 0, rs: cols, cs: 1 }
    }

    /// Transpose of a row-major contiguous matrix with `cols` columns.
    pub fn rows_t(data: &'a [f64], cols: usize) -> Self {
        Self { data, offset: 0, rs: 1, cs: cols }
    }

    pub fn strided(data: &'a [f64], offset: usize, rs: usize, cs: usize) -> Self {
        Self { data, offset, rs, cs }
    }

    fn check(&self, rows: usize, cols: usize) {
        if rows > 0 && cols > 0 {
            let last = self.offset + (rows - 1) * self.rs + (cols - 1) * self.cs;
            assert!(last < self.data.len(), "gemm operand view out of bounds");
        }
    }
}

/// `c = alpha * a(m x k) * b(k x n) + beta * c(m x n)`.
///
/// `c` is addressed as `c[c_off + i * rsc + j * csc]`; the addressed entries
/// must be distinct, which holds for every call site (row strides >= n).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: View<'_>,
    b: View<'_>,
    beta: f64,
    c: &mut [f64],
    c_off: usize,
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    a.check(m, k);
    b.check(k, n);
    let last = c_off + (m - 1) * rsc + (n - 1) * csc;
    assert!(last < c.len(), "gemm output view out of bounds");
    debug_assert!(csc == 1 && rsc >= n || rsc == 1 && csc >= m, "output entries must not alias");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let x = &mut c[c_off + i * rsc + j * csc];
                *x = if beta == 0.0 { 0.0 } else { beta * *x };
            }
        }
        return;
    }
    // SAFETY: every addressed element was bounds-checked above and the output
    // entries are pairwise distinct.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr().add(c_off),
            rsc as isize,
            csc as isize,
        );
    }
}
