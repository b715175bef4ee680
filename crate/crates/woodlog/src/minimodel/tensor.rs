//! Dense NCHW tensor in f64, the only array type the model needs.

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    #[inline]
    pub fn index(&self, ni: usize, ci: usize, y: usize, x: usize) -> usize {
        ((ni * self.c + ci) * self.h + y) * self.w + x
    }

    #[inline]
    pub fn get(&self, ni: usize, ci: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(ni, ci, y, x)]
    }

    #[inline]
    pub fn set(&mut self, ni: usize, ci: usize, y: usize, x: usize, v: f64) {
        let i = self.index(ni, ci, y, x);
        self.data[i] = v;
    }

    pub fn same_shape(&self, other: &Tensor4) -> bool {
        (self.n, self.c, self.h, self.w) == (other.n, other.c, other.h, other.w)
    }

    /// The per-sample slab length.
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }
}
