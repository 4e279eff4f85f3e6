//! Maximum-weight perfect matching on a dense complete graph by the
//! primal-dual blossom method, O(V^3). Vertices are 1-based internally; index 0
//! means "none". Blossoms take indices above `n`.

use std::collections::VecDeque;

const NONE: u32 = 0;

pub(crate) struct Blossom {
    n: usize,
    n_x: usize,
    size: usize,
    /// Edge weights between original vertices, `(n + 1)^2`, zero on the diagonal.
    w: Vec<i64>,
    /// Representative original edge `(u, v)` between two (super)vertices.
    g: Vec<(u32, u32)>,
    lab: Vec<i64>,
    mate: Vec<usize>,
    slack: Vec<usize>,
    st: Vec<usize>,
    pa: Vec<usize>,
    flower_from: Vec<u32>,
    label: Vec<i8>,
    vis: Vec<u32>,
    vis_t: u32,
    flower: Vec<Vec<usize>>,
    queue: VecDeque<usize>,
}

impl Blossom {
    /// `weight(i, j)` for 0-based `i != j`; must be symmetric and positive.
    pub(crate) fn new(n: usize, weight: impl Fn(usize, usize) -> i64) -> Self {
        let size = n + n / 2 + 2;
        let stride = n + 1;
        let mut w = vec![0i64; stride * stride];
        let mut g = vec![(NONE, NONE); size * size];
        for u in 1..=n {
            for v in 1..=n {
                if u != v {
                    // Even weights keep every initial dual even, so slacks
                    // between outer vertices stay even and halve exactly.
                    w[u * stride + v] = 2 * weight(u - 1, v - 1);
                    g[u * size + v] = (u as u32, v as u32);
                }
            }
        }
        let mut flower_from = vec![0u32; size * stride];
        for u in 1..=n {
            flower_from[u * stride + u] = u as u32;
        }
        Self {
            n,
            n_x: n,
            size,
            w,
            g,
            lab: vec![0; size],
            mate: vec![0; size],
            slack: vec![0; size],
            st: (0..size).map(|i| if i <= n { i } else { 0 }).collect(),
            pa: vec![0; size],
            flower_from,
            label: vec![-1; size],
            vis: vec![0; size],
            vis_t: 0,
            flower: vec![Vec::new(); size],
            queue: VecDeque::new(),
        }
    }

    #[inline]
    fn edge(&self, a: usize, b: usize) -> (usize, usize) {
        let (u, v) = self.g[a * self.size + b];
        (u as usize, v as usize)
    }

    #[inline]
    fn present(&self, a: usize, b: usize) -> bool {
        self.g[a * self.size + b].0 != NONE
    }

    #[inline]
    fn delta(&self, a: usize, b: usize) -> i64 {
        let (u, v) = if a <= self.n && b <= self.n { (a, b) } else { self.edge(a, b) };
        self.lab[u] + self.lab[v] - 2 * self.w[u * (self.n + 1) + v]
    }

    fn update_slack(&mut self, u: usize, x: usize) {
        let d = self.delta(u, x);
        self.update_slack_with(u, x, d);
    }

    #[inline]
    fn update_slack_with(&mut self, u: usize, x: usize, delta_ux: i64) {
        if self.slack[x] == 0 || delta_ux < self.delta(self.slack[x], x) {
            self.slack[x] = u;
        }
    }

    fn set_slack(&mut self, x: usize) {
        self.slack[x] = 0;
        for u in 1..=self.n {
            if self.present(u, x) && self.st[u] != x && self.label[self.st[u]] == 0 {
                self.update_slack(u, x);
            }
        }
    }

    fn q_push(&mut self, x: usize) {
        if x <= self.n {
            self.queue.push_back(x);
        } else {
            for i in 0..self.flower[x].len() {
                let y = self.flower[x][i];
                self.q_push(y);
            }
        }
    }

    fn set_st(&mut self, x: usize, b: usize) {
        self.st[x] = b;
        if x > self.n {
            for i in 0..self.flower[x].len() {
                let y = self.flower[x][i];
                self.set_st(y, b);
            }
        }
    }

    fn get_pr(&mut self, b: usize, xr: usize) -> usize {
        let pr = self.flower[b].iter().position(|&x| x == xr).expect("vertex belongs to blossom");
        if pr % 2 == 1 {
            self.flower[b][1..].reverse();
            self.flower[b].len() - pr
        } else {
            pr
        }
    }

    fn set_match(&mut self, u: usize, v: usize) {
        let (eu, ev) = self.edge(u, v);
        self.mate[u] = ev;
        if u > self.n {
            let xr = self.flower_from[u * (self.n + 1) + eu] as usize;
            let pr = self.get_pr(u, xr);
            for i in 0..pr {
                let (a, b) = (self.flower[u][i], self.flower[u][i ^ 1]);
                self.set_match(a, b);
            }
            self.set_match(xr, v);
            self.flower[u].rotate_left(pr);
        }
    }

    fn augment(&mut self, mut u: usize, mut v: usize) {
        loop {
            let xnv = self.st[self.mate[u]];
            self.set_match(u, v);
            if xnv == 0 {
                return;
            }
            let next = self.st[self.pa[xnv]];
            self.set_match(xnv, next);
            u = next;
            v = xnv;
        }
    }

    fn get_lca(&mut self, mut u: usize, mut v: usize) -> usize {
        self.vis_t += 1;
        let t = self.vis_t;
        while u != 0 || v != 0 {
            if u != 0 {
                if self.vis[u] == t {
                    return u;
                }
                self.vis[u] = t;
                u = self.st[self.mate[u]];
                if u != 0 {
                    u = self.st[self.pa[u]];
                }
            }
            std::mem::swap(&mut u, &mut v);
        }
        0
    }

    fn add_blossom(&mut self, u: usize, lca: usize, v: usize) {
        let n = self.n;
        let mut b = n + 1;
        while b <= self.n_x && self.st[b] != 0 {
            b += 1;
        }
        if b > self.n_x {
            self.n_x += 1;
        }
        self.lab[b] = 0;
        self.label[b] = 0;
        self.mate[b] = self.mate[lca];
        let mut flower = vec![lca];
        let mut x = u;
        while x != lca {
            flower.push(x);
            let y = self.st[self.mate[x]];
            flower.push(y);
            self.q_push(y);
            x = self.st[self.pa[y]];
        }
        flower[1..].reverse();
        let mut x = v;
        while x != lca {
            flower.push(x);
            let y = self.st[self.mate[x]];
            flower.push(y);
            self.q_push(y);
            x = self.st[self.pa[y]];
        }
        self.flower[b] = flower;
        self.set_st(b, b);
        let size = self.size;
        for x in 1..=self.n_x {
            self.g[b * size + x] = (NONE, NONE);
            self.g[x * size + b] = (NONE, NONE);
        }
        let stride = n + 1;
        self.flower_from[b * stride..(b + 1) * stride].fill(0);
        for i in 0..self.flower[b].len() {
            let xs = self.flower[b][i];
            for x in 1..=self.n_x {
                if self.present(xs, x) && (!self.present(b, x) || self.delta(xs, x) < self.delta(b, x)) {
                    self.g[b * size + x] = self.g[xs * size + x];
                    self.g[x * size + b] = self.g[x * size + xs];
                }
            }
            for x in 1..=n {
                if self.flower_from[xs * stride + x] != 0 {
                    self.flower_from[b * stride + x] = xs as u32;
                }
            }
        }
        self.set_slack(b);
    }

    fn expand_blossom(&mut self, b: usize) {
        for i in 0..self.flower[b].len() {
            let x = self.flower[b][i];
            self.set_st(x, x);
        }
        let (inner, _) = self.edge(b, self.pa[b]);
        let xr = self.flower_from[b * (self.n + 1) + inner] as usize;
        let pr = self.get_pr(b, xr);
        let mut i = 0;
        while i < pr {
            let xs = self.flower[b][i];
            let xns = self.flower[b][i + 1];
            self.pa[xs] = self.edge(xns, xs).0;
            self.label[xs] = 1;
            self.label[xns] = 0;
            self.slack[xs] = 0;
            self.set_slack(xns);
            self.q_push(xns);
            i += 2;
        }
        self.label[xr] = 1;
        self.pa[xr] = self.pa[b];
        for i in pr + 1..self.flower[b].len() {
            let xs = self.flower[b][i];
            self.label[xs] = -1;
            self.set_slack(xs);
        }
        self.st[b] = 0;
    }

    /// Handles a tight edge from an outer vertex; true when it augmented.
    fn on_found_edge(&mut self, eu: usize, ev: usize) -> bool {
        let u = self.st[eu];
        let v = self.st[ev];
        if self.label[v] == -1 {
            self.pa[v] = eu;
            self.label[v] = 1;
            let nu = self.st[self.mate[v]];
            self.slack[v] = 0;
            self.slack[nu] = 0;
            self.label[nu] = 0;
            self.q_push(nu);
        } else if self.label[v] == 0 {
            let lca = self.get_lca(u, v);
            if lca == 0 {
                self.augment(u, v);
                self.augment(v, u);
                return true;
            }
            self.add_blossom(u, lca, v);
        }
        false
    }

    /// One augmentation phase; false when no augmenting path improves the weight.
    fn phase(&mut self) -> bool {
        let n = self.n;
        for x in 1..=self.n_x {
            self.label[x] = -1;
            self.slack[x] = 0;
        }
        self.queue.clear();
        for x in 1..=self.n_x {
            if self.st[x] == x && self.mate[x] == 0 {
                self.pa[x] = 0;
                self.label[x] = 0;
                self.q_push(x);
            }
        }
        if self.queue.is_empty() {
            return false;
        }
        loop {
            while let Some(u) = self.queue.pop_front() {
                if self.label[self.st[u]] == 1 {
                    continue;
                }
                // Edges between original vertices are never rewritten, so the
                // scan reads weights directly.
                let row = u * (n + 1);
                let lab_u = self.lab[u];
                for v in 1..=n {
                    let sv = self.st[v];
                    if self.st[u] == sv {
                        continue;
                    }
                    let d = lab_u + self.lab[v] - 2 * self.w[row + v];
                    if d == 0 {
                        if self.on_found_edge(u, v) {
                            return true;
                        }
                    } else {
                        self.update_slack_with(u, sv, d);
                    }
                }
            }
            let mut d = i64::MAX;
            for b in n + 1..=self.n_x {
                if self.st[b] == b && self.label[b] == 1 {
                    d = d.min(self.lab[b] / 2);
                }
            }
            for x in 1..=self.n_x {
                if self.st[x] == x && self.slack[x] != 0 {
                    match self.label[x] {
                        -1 => d = d.min(self.delta(self.slack[x], x)),
                        0 => d = d.min(self.delta(self.slack[x], x) / 2),
                        _ => {}
                    }
                }
            }
            if d == i64::MAX {
                return false;
            }
            // Perfect-matching duals are unrestricted in sign, so free vertices
            // never stop the search; a complete graph always augments.
            for u in 1..=n {
                match self.label[self.st[u]] {
                    0 => self.lab[u] -= d,
                    1 => self.lab[u] += d,
                    _ => {}
                }
            }
            for b in n + 1..=self.n_x {
                if self.st[b] == b {
                    match self.label[b] {
                        0 => self.lab[b] += 2 * d,
                        1 => self.lab[b] -= 2 * d,
                        _ => {}
                    }
                }
            }
            self.queue.clear();
            for x in 1..=self.n_x {
                let s = self.slack[x];
                if self.st[x] == x && s != 0 && self.st[s] != x && self.delta(s, x) == 0 {
                    let (eu, ev) = self.edge(s, x);
                    if self.on_found_edge(eu, ev) {
                        return true;
                    }
                }
            }
            for b in n + 1..=self.n_x {
                if self.st[b] == b && self.label[b] == 1 && self.lab[b] == 0 {
                    self.expand_blossom(b);
                }
            }
        }
    }

    /// Runs to optimality and returns the 0-based mate of every vertex
    /// (`usize::MAX` when unmatched).
    pub(crate) fn solve(mut self) -> Vec<usize> {
        let n = self.n;
        let stride = n + 1;
        // Feasible start: each vertex carries its heaviest incident weight, so
        // mutual best partners are tight and can be matched greedily.
        for u in 1..=n {
            self.lab[u] = (1..=n).filter(|&v| v != u).map(|v| self.w[u * stride + v]).max().unwrap_or(0);
        }
        for u in 1..=n {
            if self.mate[u] != 0 {
                continue;
            }
            if let Some(v) = (u + 1..=n).find(|&v| self.mate[v] == 0 && self.delta(u, v) == 0) {
                self.mate[u] = v;
                self.mate[v] = u;
            }
        }
        while self.phase() {}
        (1..=self.n).map(|u| if self.mate[u] == 0 { usize::MAX } else { self.mate[u] - 1 }).collect()
    }
}
