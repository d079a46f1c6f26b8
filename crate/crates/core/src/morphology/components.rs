use std::collections::VecDeque;

use crate::volume::VolumeHeader;

use super::{BinaryMask, Connectivity};

/// Labeled connected components. Id 0 is background; ids 1..=count are ordered
/// by decreasing size, ties broken by the smallest linear index of the component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    pub header: VolumeHeader,
    pub labels: Vec<u32>,
    pub count: usize,
    /// `sizes[id - 1]` is the voxel count of component `id`.
    pub sizes: Vec<usize>,
}

impl ComponentSet {
    /// Linear indices of every component, `members()[id - 1]`, each in ascending order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                out[l as usize - 1].push(i);
            }
        }
        out
    }
}

fn neighbor_offsets(connectivity: Connectivity) -> Vec<[isize; 3]> {
    let mut out = Vec::with_capacity(26);
    for dz in -1isize..=1 {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let manhattan = dx.abs() + dy.abs() + dz.abs();
                let keep = match connectivity {
                    Connectivity::Face6 => manhattan == 1,
                    Connectivity::Full26 => manhattan > 0,
                };
                if keep {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentSet {
    let header = mask.header().clone();
    let [nx, ny, nz] = header.dims;
    let bits = mask.voxels();
    let offsets = neighbor_offsets(connectivity);
    let mut provisional = vec![0u32; bits.len()];
    let mut sizes: Vec<usize> = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..bits.len() {
        if !bits[start] || provisional[start] != 0 {
            continue;
        }
        sizes.push(0);
        let id = sizes.len() as u32;
        provisional[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            sizes[id as usize - 1] += 1;
            let [x, y, z] = header.coords(i);
            for o in &offsets {
                let (qx, qy, qz) = (x as isize + o[0], y as isize + o[1], z as isize + o[2]);
                if qx < 0 || qy < 0 || qz < 0 || qx >= nx as isize || qy >= ny as isize || qz >= nz as isize {
                    continue;
                }
                let j = header.index(qx as usize, qy as usize, qz as usize);
                if bits[j] && provisional[j] == 0 {
                    provisional[j] = id;
                    queue.push_back(j);
                }
            }
        }
    }

    // Provisional ids follow first-voxel order, so a stable sort by size keeps the tie rule.
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]));
    let mut remap = vec![0u32; sizes.len() + 1];
    for (rank, &old) in order.iter().enumerate() {
        remap[old + 1] = rank as u32 + 1;
    }
    let labels = provisional.iter().map(|&l| remap[l as usize]).collect();
    let sorted_sizes = order.iter().map(|&o| sizes[o]).collect();
    ComponentSet {
        header,
        labels,
        count: sizes.len(),
        sizes: sorted_sizes,
    }
}
