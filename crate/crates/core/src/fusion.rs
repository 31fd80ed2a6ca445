//! Fusing fragmented instance masks with a semantic pre-segmentation.
//!
//! The semantic mask is labeled into connected components ("objects").
//! Instances are assigned to the components they overlap, then same-class
//! instances are merge-linked when their IoU or mutual containment passes a
//! threshold, or when they sit on the same semantic component. The
//! transitive closure of those links (union-find) defines the merge groups;
//! each group becomes one output instance.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::raster::{connected_components, BinaryMask, ComponentLabeling, Connectivity};

/// One instance prediction: a nonempty mask with a class id and an
/// optional confidence score.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: u32,
    pub class_id: u32,
    pub score: Option<f64>,
    mask: BinaryMask,
}

impl Instance {
    pub fn new(id: u32, class_id: u32, score: Option<f64>, mask: BinaryMask) -> Result<Self> {
        if mask.is_empty() {
            return Err(Error::invalid(format!("instance {id} has an empty mask")));
        }
        Ok(Instance {
            id,
            class_id,
            score,
            mask,
        })
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }
}

/// Instances sharing one canvas; ids are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSet {
    width: u32,
    height: u32,
    instances: Vec<Instance>,
}

impl InstanceSet {
    pub fn new(width: u32, height: u32, instances: Vec<Instance>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for inst in &instances {
            if inst.mask.width() != width || inst.mask.height() != height {
                return Err(Error::DimensionMismatch(
                    width,
                    height,
                    inst.mask.width(),
                    inst.mask.height(),
                ));
            }
            if !seen.insert(inst.id) {
                return Err(Error::invalid(format!("duplicate instance id {}", inst.id)));
            }
        }
        Ok(InstanceSet {
            width,
            height,
            instances,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Union of all instance masks.
    pub fn union_mask(&self) -> BinaryMask {
        let mut out = BinaryMask::new(self.width, self.height);
        for inst in &self.instances {
            out.union_with(&inst.mask).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrphanPolicy {
    Keep,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticFill {
    /// Output masks are exactly the union of merged input masks.
    UnionOnly,
    /// Additionally claim semantic pixels near the merge group, bridging
    /// the gaps between fragments.
    FillBridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub iou_threshold: f64,
    pub containment_threshold: f64,
    pub connectivity: Connectivity,
    pub orphan_policy: OrphanPolicy,
    pub semantic_fill: SemanticFill,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            iou_threshold: 0.05,
            containment_threshold: 0.8,
            connectivity: Connectivity::Eight,
            orphan_policy: OrphanPolicy::Keep,
            semantic_fill: SemanticFill::UnionOnly,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(Error::invalid("iou_threshold must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.containment_threshold) {
            return Err(Error::invalid("containment_threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeReason {
    Iou,
    Containment,
    SharedRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeDecision {
    Merge(MergeReason),
    Keep,
}

/// One output instance of the fusion: its surviving id (the minimal input
/// id of the group), the absorbed input ids, and the strongest link reason
/// (None for groups of one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub survivor: u32,
    pub absorbed: Vec<u32>,
    pub reason: Option<MergeReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub config: FusionConfig,
    pub input_count: usize,
    pub output_count: usize,
    pub merges: Vec<MergeRecord>,
    pub orphans: Vec<u32>,
}

/// Pairwise merge predicate: merge on IoU above threshold, or on either
/// mask being contained in the other above the containment threshold.
/// Instances of different classes never merge. Shared-region links are
/// decided by [`fuse`] from the semantic assignment, not here.
pub fn merge_pair_decision(a: &Instance, b: &Instance, cfg: &FusionConfig) -> Result<MergeDecision> {
    a.mask.same_size(&b.mask)?;
    if a.class_id != b.class_id {
        return Ok(MergeDecision::Keep);
    }
    if metrics::iou(&a.mask, &b.mask)? >= cfg.iou_threshold {
        return Ok(MergeDecision::Merge(MergeReason::Iou));
    }
    let c_ab = metrics::containment(&a.mask, &b.mask)?;
    let c_ba = metrics::containment(&b.mask, &a.mask)?;
    if c_ab >= cfg.containment_threshold || c_ba >= cfg.containment_threshold {
        return Ok(MergeDecision::Merge(MergeReason::Containment));
    }
    Ok(MergeDecision::Keep)
}

/// Map each instance id to the semantic components it belongs to: those
/// with containment(component, instance) >= tau_c or
/// iou(component, instance) >= tau_iou.
pub fn assign_to_regions(
    instances: &InstanceSet,
    labeling: &ComponentLabeling,
    cfg: &FusionConfig,
) -> Result<BTreeMap<u32, BTreeSet<u32>>> {
    if instances.width() != labeling.width() || instances.height() != labeling.height() {
        return Err(Error::DimensionMismatch(
            instances.width(),
            instances.height(),
            labeling.width(),
            labeling.height(),
        ));
    }
    let comp_sizes = labeling.component_sizes();
    let mut out = BTreeMap::new();
    for inst in instances.instances() {
        let mut overlaps: BTreeMap<u32, u64> = BTreeMap::new();
        let (x0, y0, x1, y1) = inst.mask.bounding_box().expect("instance masks are nonempty");
        for y in y0..=y1 {
            for x in x0..=x1 {
                if inst.mask.get(x, y) {
                    let l = labeling.label_at(x, y);
                    if l != 0 {
                        *overlaps.entry(l).or_insert(0) += 1;
                    }
                }
            }
        }
        let inst_count = inst.mask.count();
        let mut assigned = BTreeSet::new();
        for (&label, &inter) in &overlaps {
            let containment = inter as f64 / inst_count as f64;
            let union = inst_count + comp_sizes[label as usize] - inter;
            let iou = inter as f64 / union as f64;
            if containment >= cfg.containment_threshold || iou >= cfg.iou_threshold {
                assigned.insert(label);
            }
        }
        out.insert(inst.id, assigned);
    }
    Ok(out)
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Intersection pixel count restricted to the overlap of the two bounding
/// boxes; zero when the boxes are disjoint.
fn bbox_intersect_count(
    a: &BinaryMask,
    ab: (u32, u32, u32, u32),
    b: &BinaryMask,
    bb: (u32, u32, u32, u32),
) -> u64 {
    let x0 = ab.0.max(bb.0);
    let y0 = ab.1.max(bb.1);
    let x1 = ab.2.min(bb.2);
    let y1 = ab.3.min(bb.3);
    if x0 > x1 || y0 > y1 {
        return 0;
    }
    let mut n = 0u64;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if a.get(x, y) && b.get(x, y) {
                n += 1;
            }
        }
    }
    n
}

/// Merge fragmented instances over a semantic pre-segmentation.
///
/// The result is order-independent: any permutation of the input instances
/// produces the same output, and running `fuse` on its own output performs
/// no further merges.
pub fn fuse(
    instances: &InstanceSet,
    semantic: &BinaryMask,
    cfg: &FusionConfig,
) -> Result<(InstanceSet, FusionReport)> {
    cfg.validate()?;
    if instances.width() != semantic.width() || instances.height() != semantic.height() {
        return Err(Error::DimensionMismatch(
            instances.width(),
            instances.height(),
            semantic.width(),
            semantic.height(),
        ));
    }

    let labeling = connected_components(semantic, cfg.connectivity);
    let assignments = assign_to_regions(instances, &labeling, cfg)?;

    let items = instances.instances();
    let n = items.len();
    let bboxes: Vec<(u32, u32, u32, u32)> = items
        .iter()
        .map(|i| i.mask.bounding_box().expect("instance masks are nonempty"))
        .collect();
    let counts: Vec<u64> = items.iter().map(|i| i.mask.count()).collect();

    let mut links = DisjointSet::new(n);
    let mut link_reasons: Vec<(usize, usize, MergeReason)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if items[i].class_id != items[j].class_id {
                continue;
            }
            let inter = bbox_intersect_count(&items[i].mask, bboxes[i], &items[j].mask, bboxes[j]);
            let union = counts[i] + counts[j] - inter;
            let reason = if inter as f64 / union as f64 >= cfg.iou_threshold {
                Some(MergeReason::Iou)
            } else if inter as f64 / counts[j].min(counts[i]) as f64
                >= cfg.containment_threshold
            {
                Some(MergeReason::Containment)
            } else if !assignments[&items[i].id].is_disjoint(&assignments[&items[j].id]) {
                Some(MergeReason::SharedRegion)
            } else {
                None
            };
            if let Some(reason) = reason {
                links.union(i, j);
                link_reasons.push((i, j, reason));
            }
        }
    }

    // groups keyed by minimal member input id
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let mut root_to_min: BTreeMap<usize, u32> = BTreeMap::new();
    for (idx, inst) in items.iter().enumerate() {
        let root = links.find(idx);
        let entry = root_to_min.entry(root).or_insert(inst.id);
        *entry = (*entry).min(inst.id);
    }
    for (idx, _) in items.iter().enumerate() {
        let root = links.find(idx);
        groups.entry(root_to_min[&root]).or_default().push(idx);
    }

    let mut group_reason: BTreeMap<u32, MergeReason> = BTreeMap::new();
    for &(i, _, reason) in &link_reasons {
        let key = root_to_min[&links.find(i)];
        let entry = group_reason.entry(key).or_insert(reason);
        *entry = (*entry).min(reason); // MergeReason order doubles as priority
    }

    let mut out_instances = Vec::new();
    let mut merges = Vec::new();
    let mut orphans = Vec::new();
    for (&min_id, members) in &groups {
        let orphaned = members
            .iter()
            .all(|&idx| assignments[&items[idx].id].is_empty());

        if orphaned {
            for &idx in members {
                orphans.push(items[idx].id);
            }
            if cfg.orphan_policy == OrphanPolicy::Drop {
                continue;
            }
        }

        let mut mask = BinaryMask::new(instances.width(), instances.height());
        let mut score: Option<f64> = None;
        for &idx in members {
            mask.union_with(&items[idx].mask).unwrap();
            score = match (score, items[idx].score) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            };
        }

        if cfg.semantic_fill == SemanticFill::FillBridge && !orphaned {
            let mut claimed: BTreeSet<u32> = BTreeSet::new();
            for &idx in members {
                claimed.extend(&assignments[&items[idx].id]);
            }
            // grow to a fixpoint so a second fuse pass cannot add pixels
            loop {
                let (x0, y0, x1, y1) = mask.bounding_box().unwrap();
                let x0 = x0.saturating_sub(2);
                let y0 = y0.saturating_sub(2);
                let x1 = (x1 + 2).min(instances.width() - 1);
                let y1 = (y1 + 2).min(instances.height() - 1);
                let mut changed = false;
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let l = labeling.label_at(x, y);
                        if l != 0 && claimed.contains(&l) && !mask.get(x, y) {
                            mask.set(x, y, true);
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
        }

        let class_id = items[members[0]].class_id;
        out_instances.push(Instance::new(0, class_id, score, mask).unwrap());

        if !orphaned {
            let mut absorbed: Vec<u32> = members
                .iter()
                .map(|&idx| items[idx].id)
                .filter(|&id| id != min_id)
                .collect();
            absorbed.sort_unstable();
            merges.push(MergeRecord {
                survivor: min_id,
                absorbed,
                reason: group_reason.get(&min_id).copied(),
            });
        }
    }
    orphans.sort_unstable();

    // fresh dense ids in group order (groups iterate by minimal input id)
    for (i, inst) in out_instances.iter_mut().enumerate() {
        inst.id = i as u32 + 1;
    }

    let output_count = out_instances.len();
    let fused = InstanceSet::new(instances.width(), instances.height(), out_instances)?;
    let report = FusionReport {
        config: *cfg,
        input_count: n,
        output_count,
        merges,
        orphans,
    };
    Ok((fused, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(canvas: u32, x0: u32, y0: u32, w: u32, h: u32) -> BinaryMask {
        let mut m = BinaryMask::new(canvas, canvas);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                m.set(x, y, true);
            }
        }
        m
    }

    fn inst(id: u32, class_id: u32, mask: BinaryMask) -> Instance {
        Instance::new(id, class_id, Some(0.9), mask).unwrap()
    }

    #[test]
    fn pair_identical_masks_merge_on_iou() {
        let cfg = FusionConfig::default();
        let a = inst(1, 1, block(8, 1, 1, 3, 3));
        let b = inst(2, 1, block(8, 1, 1, 3, 3));
        assert_eq!(
            merge_pair_decision(&a, &b, &cfg).unwrap(),
            MergeDecision::Merge(MergeReason::Iou)
        );
    }

    #[test]
    fn pair_contained_low_iou_merges_on_containment() {
        let cfg = FusionConfig::default();
        // B is 2x2 inside a 6x6 A: iou 4/36 with tau 0.05... raise tau to isolate
        let cfg = FusionConfig {
            iou_threshold: 0.5,
            ..cfg
        };
        let a = inst(1, 1, block(8, 0, 0, 6, 6));
        let b = inst(2, 1, block(8, 2, 2, 2, 2));
        assert_eq!(
            merge_pair_decision(&a, &b, &cfg).unwrap(),
            MergeDecision::Merge(MergeReason::Containment)
        );
    }

    #[test]
    fn pair_disjoint_keeps() {
        let cfg = FusionConfig::default();
        let a = inst(1, 1, block(8, 0, 0, 2, 2));
        let b = inst(2, 1, block(8, 5, 5, 2, 2));
        assert_eq!(merge_pair_decision(&a, &b, &cfg).unwrap(), MergeDecision::Keep);
    }

    #[test]
    fn pair_never_merges_across_classes() {
        let cfg = FusionConfig::default();
        let a = inst(1, 1, block(8, 1, 1, 3, 3));
        let b = inst(2, 2, block(8, 1, 1, 3, 3));
        assert_eq!(merge_pair_decision(&a, &b, &cfg).unwrap(), MergeDecision::Keep);
    }

    #[test]
    fn assign_zero_overlap_is_empty() {
        let cfg = FusionConfig::default();
        let semantic = block(8, 0, 0, 3, 3);
        let labeling = connected_components(&semantic, Connectivity::Eight);
        let set = InstanceSet::new(8, 8, vec![inst(1, 1, block(8, 5, 5, 2, 2))]).unwrap();
        let assignments = assign_to_regions(&set, &labeling, &cfg).unwrap();
        assert!(assignments[&1].is_empty());
    }

    #[test]
    fn assign_fully_contained_fragment() {
        let cfg = FusionConfig::default();
        let semantic = block(8, 0, 0, 6, 6);
        let labeling = connected_components(&semantic, Connectivity::Eight);
        let set = InstanceSet::new(8, 8, vec![inst(7, 1, block(8, 1, 1, 2, 2))]).unwrap();
        let assignments = assign_to_regions(&set, &labeling, &cfg).unwrap();
        assert_eq!(assignments[&7], BTreeSet::from([1]));
    }

    #[test]
    fn assign_straddling_instance_takes_majority_component() {
        // instance covers 10 px: 6 in component 1, 4 in component 2
        let cfg = FusionConfig {
            containment_threshold: 0.5,
            iou_threshold: 1.0, // disable the iou route
            ..FusionConfig::default()
        };
        let mut semantic = BinaryMask::new(10, 10);
        for y in 0..10 {
            for x in 0..3 {
                semantic.set(x, y, true); // component 1: columns 0..3
            }
            for x in 5..10 {
                semantic.set(x, y, true); // component 2: columns 5..10
            }
        }
        let labeling = connected_components(&semantic, Connectivity::Eight);
        assert_eq!(labeling.count(), 2);
        // 1x10 row instance: x 0..3 in comp1 (3px)... build 2x5 block over both
        let mut m = BinaryMask::new(10, 10);
        for x in 0..3 {
            m.set(x, 0, true);
            m.set(x, 1, true); // 6 px in component 1
        }
        for x in 5..7 {
            m.set(x, 0, true);
            m.set(x, 1, true); // 4 px in component 2
        }
        let set = InstanceSet::new(10, 10, vec![inst(1, 1, m)]).unwrap();
        let assignments = assign_to_regions(&set, &labeling, &cfg).unwrap();
        assert_eq!(assignments[&1], BTreeSet::from([1]));
    }

    #[test]
    fn fuse_identity_single_instance() {
        let cfg = FusionConfig::default();
        let semantic = block(8, 1, 1, 4, 4);
        let set = InstanceSet::new(8, 8, vec![inst(1, 1, block(8, 1, 1, 4, 4))]).unwrap();
        let (out, report) = fuse(&set, &semantic, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.instances()[0].mask(), set.instances()[0].mask());
        assert_eq!(report.input_count, 1);
        assert_eq!(report.output_count, 1);
        assert!(report.orphans.is_empty());
    }

    #[test]
    fn fuse_fragments_on_shared_stripe() {
        let cfg = FusionConfig::default();
        // diagonal-ish stripe as one semantic component, two disjoint fragments
        let mut semantic = BinaryMask::new(16, 16);
        for i in 0..14 {
            semantic.set(i, i, true);
            semantic.set(i + 1, i, true);
        }
        let mut frag_a = BinaryMask::new(16, 16);
        let mut frag_b = BinaryMask::new(16, 16);
        for i in 0..5 {
            frag_a.set(i, i, true);
            frag_a.set(i + 1, i, true);
        }
        for i in 8..14 {
            frag_b.set(i, i, true);
            frag_b.set(i + 1, i, true);
        }
        let set =
            InstanceSet::new(16, 16, vec![inst(1, 1, frag_a.clone()), inst(2, 1, frag_b)]).unwrap();
        let (out, report) = fuse(&set, &semantic, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(report.merges.len(), 1);
        assert_eq!(report.merges[0].survivor, 1);
        assert_eq!(report.merges[0].absorbed, vec![2]);
        assert_eq!(report.merges[0].reason, Some(MergeReason::SharedRegion));

        // with fill_bridge the fused mask recovers the gap pixels
        let cfg_bridge = FusionConfig {
            semantic_fill: SemanticFill::FillBridge,
            ..cfg
        };
        let (out_b, _) = fuse(&set, &semantic, &cfg_bridge).unwrap();
        let fused_iou = metrics::iou(out_b.instances()[0].mask(), &semantic).unwrap();
        let frag_iou = metrics::iou(&frag_a, &semantic).unwrap();
        assert!(fused_iou > frag_iou);
        assert_eq!(fused_iou, 1.0);
    }

    #[test]
    fn fuse_absorbs_contained_instance() {
        let cfg = FusionConfig {
            iou_threshold: 0.9,
            ..FusionConfig::default()
        };
        let semantic = block(12, 0, 0, 8, 8);
        let a = block(12, 0, 0, 8, 8);
        let b = block(12, 2, 2, 2, 2);
        let set = InstanceSet::new(12, 12, vec![inst(1, 1, a.clone()), inst(2, 1, b)]).unwrap();
        let (out, report) = fuse(&set, &semantic, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.instances()[0].mask(), &a);
        assert_eq!(report.merges[0].absorbed, vec![2]);
    }

    #[test]
    fn fuse_orphan_policy() {
        let semantic = block(16, 0, 0, 4, 4);
        let matched = inst(1, 1, block(16, 0, 0, 4, 4));
        let orphan = inst(2, 1, block(16, 10, 10, 2, 2));
        let set = InstanceSet::new(16, 16, vec![matched, orphan]).unwrap();

        let keep = FusionConfig::default();
        let (out, report) = fuse(&set, &semantic, &keep).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(report.orphans, vec![2]);

        let drop = FusionConfig {
            orphan_policy: OrphanPolicy::Drop,
            ..keep
        };
        let (out, report) = fuse(&set, &semantic, &drop).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(report.orphans, vec![2]);
    }

    #[test]
    fn fuse_empty_semantic_degenerates_to_pairwise() {
        let semantic = BinaryMask::new(16, 16);
        let a = inst(1, 1, block(16, 0, 0, 4, 4));
        let b = inst(2, 1, block(16, 1, 0, 4, 4)); // heavy overlap with a
        let c = inst(3, 1, block(16, 10, 10, 3, 3));
        let set = InstanceSet::new(16, 16, vec![a, b, c]).unwrap();
        let (out, report) = fuse(&set, &semantic, &FusionConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(report.orphans, vec![1, 2, 3]);
    }

    #[test]
    fn fuse_conservation_and_permutation_invariance() {
        let cfg = FusionConfig::default();
        let mut semantic = BinaryMask::new(16, 16);
        for i in 0..12 {
            semantic.set(i, 3, true);
            semantic.set(i, 4, true);
        }
        let frags: Vec<Instance> = vec![
            inst(5, 1, block(16, 0, 3, 3, 2)),
            inst(2, 1, block(16, 5, 3, 3, 2)),
            inst(9, 1, block(16, 9, 3, 3, 2)),
            inst(4, 1, block(16, 12, 12, 2, 2)),
        ];
        let set = InstanceSet::new(16, 16, frags.clone()).unwrap();
        let (out, report) = fuse(&set, &semantic, &cfg).unwrap();

        let mut accounted: Vec<u32> = report
            .merges
            .iter()
            .flat_map(|m| std::iter::once(m.survivor).chain(m.absorbed.iter().copied()))
            .chain(report.orphans.iter().copied())
            .collect();
        accounted.sort_unstable();
        assert_eq!(accounted, vec![2, 4, 5, 9]);

        let mut perm = frags;
        perm.reverse();
        let set2 = InstanceSet::new(16, 16, perm).unwrap();
        let (out2, report2) = fuse(&set2, &semantic, &cfg).unwrap();
        assert_eq!(out, out2);
        assert_eq!(report, report2);
    }

    #[test]
    fn fuse_is_idempotent() {
        let cfg = FusionConfig {
            semantic_fill: SemanticFill::FillBridge,
            ..FusionConfig::default()
        };
        let mut semantic = BinaryMask::new(16, 16);
        for i in 0..12 {
            semantic.set(i, 3, true);
            semantic.set(i, 4, true);
        }
        let set = InstanceSet::new(
            16,
            16,
            vec![
                inst(1, 1, block(16, 0, 3, 3, 2)),
                inst(2, 1, block(16, 6, 3, 3, 2)),
            ],
        )
        .unwrap();
        let (once, _) = fuse(&set, &semantic, &cfg).unwrap();
        let (twice, report) = fuse(&once, &semantic, &cfg).unwrap();
        assert_eq!(once, twice);
        assert!(report.merges.iter().all(|m| m.absorbed.is_empty()));
    }

    #[test]
    fn fuse_rejects_dimension_mismatch() {
        let set = InstanceSet::new(8, 8, vec![inst(1, 1, block(8, 0, 0, 2, 2))]).unwrap();
        let semantic = BinaryMask::new(9, 8);
        assert!(fuse(&set, &semantic, &FusionConfig::default()).is_err());
    }
}
