use std::collections::VecDeque;

use panoda_tensor::{Array, Var};

use crate::error::{Error, Result};

/// Partition of one feature map into semantic regions.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionDecisionMap {
    pub height: usize,
    pub width: usize,
    /// Region id per pixel, row-major, contiguous in `0..num_regions`.
    pub region_ids: Vec<usize>,
    /// Mean feature of each region, `num_regions × c`.
    pub prototypes: Vec<Vec<f64>>,
    /// Flat index of the pixel whose feature is closest to its prototype.
    pub representatives: Vec<usize>,
    pub classes: Vec<usize>,
}

impl RegionDecisionMap {
    pub fn num_regions(&self) -> usize {
        self.prototypes.len()
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.num_regions()];
        for &r in &self.region_ids {
            s[r] += 1;
        }
        s
    }
}

const NEIGHBORS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn neighbors(i: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = ((i / w) as isize, (i % w) as isize);
    NEIGHBORS.iter().filter_map(move |&(dy, dx)| {
        let (ny, nx) = (y + dy, x + dx);
        (ny >= 0 && nx >= 0 && ny < h as isize && nx < w as isize).then(|| ny as usize * w + nx as usize)
    })
}

/// Connected components of equal-class, non-boundary pixels, numbered in
/// raster order of their first pixel. Boundary pixels get `None`.
fn label_components(sem: &[usize], boundary: &[bool], h: usize, w: usize) -> (Vec<Option<usize>>, usize) {
    let mut ids = vec![None; h * w];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if boundary[start] || ids[start].is_some() {
            continue;
        }
        ids[start] = Some(next);
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for j in neighbors(i, h, w) {
                if !boundary[j] && ids[j].is_none() && sem[j] == sem[start] {
                    ids[j] = Some(next);
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    (ids, next)
}

/// Gives each boundary pixel the region reached first by a breadth-first
/// wave from all regions at once; ties go to the lowest region id.
fn absorb_boundaries(ids: &mut [Option<usize>], h: usize, w: usize) {
    let mut frontier: Vec<usize> = (0..h * w).filter(|&i| ids[i].is_some()).collect();
    while !frontier.is_empty() {
        let mut claims: Vec<(usize, usize)> = Vec::new();
        for &i in &frontier {
            let r = ids[i].unwrap();
            for j in neighbors(i, h, w) {
                if ids[j].is_none() {
                    claims.push((j, r));
                }
            }
        }
        claims.sort_unstable();
        let mut next = Vec::new();
        for (j, r) in claims {
            if ids[j].is_none() {
                ids[j] = Some(r);
                next.push(j);
            }
        }
        frontier = next;
    }
}

/// Builds the region partition of one item from boundary logits `b1`
/// (`h × w`), semantic logits `c1` (`k × h × w`) and features (`c × h × w`).
///
/// Boundary pixels are those with `sigmoid(b1) > 0.5`; regions are the
/// 4-connected components of `argmax(c1)` over the rest. An all-boundary map
/// yields a single region.
pub fn region_construction(b1: &Array, c1: &Array, features: &Array) -> Result<RegionDecisionMap> {
    let (h, w) = (b1.shape()[b1.ndim() - 2], b1.shape()[b1.ndim() - 1]);
    let (k, ch, cw) = c1.dims3();
    let (c, fh, fw) = features.dims3();
    if b1.len() != h * w || (ch, cw) != (h, w) || (fh, fw) != (h, w) {
        return Err(Error::Shape(format!(
            "region construction needs equal resolutions, got b1 {:?}, c1 {:?}, features {:?}",
            b1.shape(),
            c1.shape(),
            features.shape()
        )));
    }
    let hw = h * w;
    let boundary: Vec<bool> = b1.data().iter().map(|&v| v > 0.0).collect();
    let sem: Vec<usize> = c1.argmax_axis(0);
    let (mut ids, mut count) = label_components(&sem, &boundary, h, w);
    if count == 0 {
        ids.iter_mut().for_each(|r| *r = Some(0));
        count = 1;
    } else {
        absorb_boundaries(&mut ids, h, w);
    }
    let region_ids: Vec<usize> = ids.into_iter().map(|r| r.expect("every pixel absorbed")).collect();

    let fd = features.data();
    let mut sizes = vec![0usize; count];
    let mut prototypes = vec![vec![0.0; c]; count];
    let mut votes = vec![vec![0usize; k]; count];
    for (i, &r) in region_ids.iter().enumerate() {
        sizes[r] += 1;
        votes[r][sem[i]] += 1;
        for (ch_i, p) in prototypes[r].iter_mut().enumerate() {
            *p += fd[ch_i * hw + i];
        }
    }
    for (p, &s) in prototypes.iter_mut().zip(&sizes) {
        p.iter_mut().for_each(|v| *v /= s as f64);
    }
    let mut representatives = vec![usize::MAX; count];
    let mut best = vec![f64::INFINITY; count];
    for (i, &r) in region_ids.iter().enumerate() {
        let d: f64 = (0..c).map(|ch_i| (fd[ch_i * hw + i] - prototypes[r][ch_i]).powi(2)).sum();
        if d < best[r] {
            best[r] = d;
            representatives[r] = i;
        }
    }
    let classes = votes
        .iter()
        .map(|v| {
            let max = *v.iter().max().unwrap();
            v.iter().position(|&n| n == max).unwrap()
        })
        .collect();
    Ok(RegionDecisionMap {
        height: h,
        width: w,
        region_ids,
        prototypes,
        representatives,
        classes,
    })
}

/// Propagates region prototypes back to pixels. Per item, with `P` the
/// `c × K` prototype matrix and `S = softmax_keys(PᵀP)`:
/// `out = F + broadcast(P) + broadcast(P·Sᵀ)`.
pub fn region_interaction(f: &Var, rdms: &[RegionDecisionMap]) -> Result<Var> {
    let (n, c, h, w) = f.value().dims4();
    if rdms.len() != n {
        return Err(Error::Shape(format!("{} region maps for a batch of {n}", rdms.len())));
    }
    let hw = h * w;
    let mut items = Vec::with_capacity(n);
    for (b, rdm) in rdms.iter().enumerate() {
        if (rdm.height, rdm.width) != (h, w) {
            return Err(Error::Shape(format!(
                "region map {}x{} does not cover features {h}x{w}",
                rdm.height, rdm.width
            )));
        }
        let k = rdm.num_regions();
        let sizes = rdm.region_sizes();
        let mut avg = Array::zeros(&[1, hw, k]);
        let mut assign = Array::zeros(&[1, hw, k]);
        for (i, &r) in rdm.region_ids.iter().enumerate() {
            avg.data_mut()[i * k + r] = 1.0 / sizes[r] as f64;
            assign.data_mut()[i * k + r] = 1.0;
        }
        let fi = f.narrow(0, b, 1).reshape(&[1, c, hw]);
        let protos = fi.bmm(&Var::constant(avg), false, false);
        let sim = protos.bmm(&protos, true, false).softmax(2);
        let mixed = protos.bmm(&sim, false, true);
        let spread = protos.add(&mixed).bmm(&Var::constant(assign), false, true);
        items.push(fi.add(&spread));
    }
    Ok(Var::concat(&items, 0).reshape(&[n, c, h, w]))
}
