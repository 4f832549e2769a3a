//! Counting fruit in a segmented cloud: statistical outlier removal, voxel
//! downsampling, DBSCAN, then merging fragments and splitting fused blobs.

use std::collections::{BTreeMap, VecDeque};

use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::{Deserialize, Serialize};

use crate::cloud::LabeledPointCloud;
use crate::error::{Error, Result};
use crate::Vec3;

pub const NOISE: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// Scale that the leaf and eps defaults derive from.
    pub fruit_radius: f64,
    pub outlier_k: usize,
    pub outlier_std_ratio: f64,
    /// Defaults to `fruit_radius / 4`.
    pub voxel_leaf: Option<f64>,
    /// Defaults to `1.5 * voxel_leaf`.
    pub dbscan_eps: Option<f64>,
    pub dbscan_min_pts: usize,
    pub merge_fraction: f64,
    pub split_trigger: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            fruit_radius: 0.2,
            outlier_k: 16,
            outlier_std_ratio: 2.0,
            voxel_leaf: None,
            dbscan_eps: None,
            dbscan_min_pts: 8,
            merge_fraction: 0.25,
            split_trigger: 1.6,
        }
    }
}

impl ClusterConfig {
    pub fn leaf(&self) -> f64 {
        self.voxel_leaf.unwrap_or(self.fruit_radius / 4.0)
    }

    pub fn eps(&self) -> f64 {
        self.dbscan_eps.unwrap_or(1.5 * self.leaf())
    }

    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.fruit_radius > 0.0) {
            p.push("cluster.fruit_radius must be positive".to_string());
        }
        if self.outlier_k == 0 {
            p.push("cluster.outlier_k must be positive".to_string());
        }
        if !(self.outlier_std_ratio > 0.0) {
            p.push("cluster.outlier_std_ratio must be positive".to_string());
        }
        if !(self.leaf() > 0.0) {
            p.push("cluster.voxel_leaf must be positive".to_string());
        }
        if !(self.eps() > 0.0) {
            p.push("cluster.dbscan_eps must be positive".to_string());
        }
        if self.dbscan_min_pts == 0 {
            p.push("cluster.dbscan_min_pts must be positive".to_string());
        }
        if !(self.merge_fraction > 0.0 && self.merge_fraction < 1.0) {
            p.push("cluster.merge_fraction must lie in (0, 1)".to_string());
        }
        if !(self.split_trigger > 1.0) {
            p.push("cluster.split_trigger must exceed 1".to_string());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

type Indexed = GeomWithData<[f64; 3], usize>;

fn tree(points: &[Vec3]) -> RTree<Indexed> {
    RTree::bulk_load(points.iter().enumerate().map(|(i, p)| Indexed::new([p.x, p.y, p.z], i)).collect())
}

/// Which points survive statistical outlier removal: those whose mean
/// distance to their `outlier_k` nearest neighbours is at most
/// `mean + outlier_std_ratio * std` over the cloud.
pub fn outlier_inliers(points: &[Vec3], config: &ClusterConfig) -> Vec<bool> {
    let k = config.outlier_k;
    if points.len() < k + 1 {
        return vec![true; points.len()];
    }
    let t = tree(points);
    let mean_dist: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = t
                .nearest_neighbor_iter_with_distance_2(&[p.x, p.y, p.z])
                .take(k + 1)
                .filter(|(n, _)| n.data != i)
                .map(|(_, d2)| d2.sqrt())
                .collect();
            // the query point itself may be displaced by an exact duplicate
            d.sort_by(f64::total_cmp);
            d.truncate(k);
            d.iter().sum::<f64>() / d.len() as f64
        })
        .collect();
    let n = mean_dist.len() as f64;
    let mu = mean_dist.iter().sum::<f64>() / n;
    let s = (mean_dist.iter().map(|d| (d - mu) * (d - mu)).sum::<f64>() / n).sqrt();
    let limit = mu + config.outlier_std_ratio * s;
    let keep: Vec<bool> = mean_dist.iter().map(|&d| d <= limit).collect();
    if keep.iter().any(|&k| k) {
        keep
    } else {
        vec![true; points.len()]
    }
}

pub fn remove_outliers(points: &[Vec3], config: &ClusterConfig) -> Vec<Vec3> {
    let keep = outlier_inliers(points, config);
    points.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| *p).collect()
}

fn voxel_key(p: &Vec3, leaf: f64) -> [i64; 3] {
    [
        (p.x / leaf).floor() as i64,
        (p.y / leaf).floor() as i64,
        (p.z / leaf).floor() as i64,
    ]
}

/// Centroid of each occupied voxel of side `leaf`, ordered by voxel key.
pub fn voxel_downsample(points: &[Vec3], leaf: f64) -> Result<Vec<Vec3>> {
    if !(leaf > 0.0) {
        return Err(Error::InvalidArgument(format!("voxel leaf must be positive, got {leaf}")));
    }
    let mut cells: BTreeMap<[i64; 3], (Vec3, usize)> = BTreeMap::new();
    for p in points {
        let e = cells.entry(voxel_key(p, leaf)).or_insert((Vec3::zeros(), 0));
        e.0 += p;
        e.1 += 1;
    }
    Ok(cells.into_values().map(|(s, n)| s / n as f64).collect())
}

/// Indices within distance `eps` of each point (itself included), ascending.
pub fn neighbourhoods(points: &[Vec3], eps: f64) -> Vec<Vec<usize>> {
    if points.is_empty() {
        return Vec::new();
    }
    let t = tree(points);
    let e2 = eps * eps;
    // query a hair wider and filter exactly, so boundary cases follow `d^2 <= eps^2`
    let wide = e2 * (1.0 + 1e-9) + 1e-300;
    points
        .iter()
        .map(|p| {
            let mut n: Vec<usize> = t
                .locate_within_distance([p.x, p.y, p.z], wide)
                .map(|n| n.data)
                .filter(|&j| (points[j] - p).norm_squared() <= e2)
                .collect();
            n.sort_unstable();
            n
        })
        .collect()
}

/// DBSCAN. Core points have at least `min_pts` points (themselves included)
/// within `eps`. Clusters are the connected components of core points,
/// numbered by their smallest member index. A border point joins the
/// lowest-numbered cluster among its core neighbours; the rest is `NOISE`.
pub fn dbscan(points: &[Vec3], eps: f64, min_pts: usize) -> Result<Vec<i64>> {
    if !(eps > 0.0) || min_pts == 0 {
        return Err(Error::InvalidArgument(format!("dbscan needs eps > 0 and min_pts >= 1, got {eps}, {min_pts}")));
    }
    let nb = neighbourhoods(points, eps);
    let core: Vec<bool> = nb.iter().map(|n| n.len() >= min_pts).collect();
    let mut ids = vec![NOISE; points.len()];
    let mut next = 0i64;
    let mut queue = VecDeque::new();
    for seed in 0..points.len() {
        if !core[seed] || ids[seed] != NOISE {
            continue;
        }
        ids[seed] = next;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            for &j in &nb[i] {
                if core[j] && ids[j] == NOISE {
                    ids[j] = next;
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    for i in 0..points.len() {
        if !core[i] {
            ids[i] = nb[i]
                .iter()
                .filter(|&&j| core[j])
                .map(|&j| ids[j])
                .min()
                .unwrap_or(NOISE);
        }
    }
    Ok(ids)
}

/// Member indices of each non-noise cluster, keyed by id.
fn groups(ids: &[i64]) -> BTreeMap<i64, Vec<usize>> {
    let mut g: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &id) in ids.iter().enumerate() {
        if id != NOISE {
            g.entry(id).or_default().push(i);
        }
    }
    g
}

/// Median cluster size; the mean of the middle two for an even count.
pub fn median_size(ids: &[i64]) -> Option<f64> {
    let mut sizes: Vec<usize> = groups(ids).values().map(Vec::len).collect();
    if sizes.is_empty() {
        return None;
    }
    sizes.sort_unstable();
    let m = sizes.len();
    Some(if m % 2 == 1 {
        sizes[m / 2] as f64
    } else {
        (sizes[m / 2 - 1] + sizes[m / 2]) as f64 / 2.0
    })
}

fn centroid(points: &[Vec3], members: &[usize]) -> Vec3 {
    members.iter().map(|&i| points[i]).sum::<Vec3>() / members.len() as f64
}

/// Renumbers ids to `0..n` in ascending order of the old ids.
fn compact(ids: &mut [i64]) {
    let map: BTreeMap<i64, i64> = groups(ids).keys().enumerate().map(|(n, &id)| (id, n as i64)).collect();
    for id in ids.iter_mut().filter(|id| **id != NOISE) {
        *id = map[id];
    }
}

/// Clusters smaller than `merge_fraction * median` join the nearest-centroid
/// regular cluster whose closest point is within `2 * eps`; otherwise they
/// become noise.
pub fn merge_small(points: &[Vec3], ids: &[i64], config: &ClusterConfig) -> Result<Vec<i64>> {
    if ids.len() != points.len() {
        return Err(Error::Shape(format!("{} ids for {} points", ids.len(), points.len())));
    }
    let Some(median) = median_size(ids) else {
        return Ok(ids.to_vec());
    };
    let g = groups(ids);
    let limit = config.merge_fraction * median;
    let reach = 2.0 * config.eps();
    let (small, regular): (Vec<_>, Vec<_>) = g.iter().partition(|(_, m)| (m.len() as f64) < limit);
    let mut out = ids.to_vec();
    for (_, members) in small {
        let c = centroid(points, members);
        let target = regular
            .iter()
            .filter(|(_, other)| {
                members
                    .iter()
                    .any(|&i| other.iter().any(|&j| (points[i] - points[j]).norm() <= reach))
            })
            .map(|(&id, other)| ((centroid(points, other) - c).norm(), id))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let new = target.map_or(NOISE, |(_, id)| id);
        for &i in members {
            out[i] = new;
        }
    }
    compact(&mut out);
    Ok(out)
}

/// Number of sub-clusters for a cluster of `size` given the median size.
pub fn split_count(size: usize, median: f64) -> usize {
    ((size as f64 / median).round() as usize).clamp(2, 4)
}

/// Clusters larger than `split_trigger * median` are divided into
/// `split_count` parts by Ward clustering.
pub fn split_large(points: &[Vec3], ids: &[i64], config: &ClusterConfig) -> Result<Vec<i64>> {
    if ids.len() != points.len() {
        return Err(Error::Shape(format!("{} ids for {} points", ids.len(), points.len())));
    }
    let Some(median) = median_size(ids) else {
        return Ok(ids.to_vec());
    };
    let g = groups(ids);
    let mut out = ids.to_vec();
    let mut next = g.keys().next_back().map_or(0, |&m| m + 1);
    for (&id, members) in &g {
        if (members.len() as f64) <= config.split_trigger * median {
            continue;
        }
        let n = split_count(members.len(), median).min(members.len());
        let sub: Vec<Vec3> = members.iter().map(|&i| points[i]).collect();
        let labels = agglomerative(&sub, n)?;
        let base = next;
        for (&i, &l) in members.iter().zip(&labels) {
            out[i] = if l == 0 { id } else { base + l as i64 - 1 };
        }
        next += n as i64 - 1;
    }
    compact(&mut out);
    Ok(out)
}

/// Ward agglomerative clustering down to `n_clusters`. Labels are numbered
/// by each cluster's smallest point index. Equal merge costs go to the
/// lexicographically smallest cluster pair.
pub fn agglomerative(points: &[Vec3], n_clusters: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::InvalidArgument(format!(
            "cannot form {n_clusters} clusters from {n} points"
        )));
    }
    // d(i, j) = 2 n_i n_j / (n_i + n_j) |c_i - c_j|^2, updated by Lance-Williams
    let mut d = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = (points[i] - points[j]).norm_squared();
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut parent: Vec<usize> = (0..n).collect();
    let nearest = |d: &[f64], active: &[bool], i: usize| -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in (0..n).filter(|&j| j != i && active[j]) {
            if d[i * n + j] < best.0 {
                best = (d[i * n + j], j);
            }
        }
        best
    };
    let mut nn: Vec<(f64, usize)> = (0..n).map(|i| nearest(&d, &active, i)).collect();
    for _ in 0..n - n_clusters {
        let mut pick: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            let (dist, j) = nn[i];
            let (a, b) = (i.min(j), i.max(j));
            let better = match pick {
                None => true,
                Some((pd, pa, pb)) => dist < pd || (dist == pd && (a, b) < (pa, pb)),
            };
            if better {
                pick = Some((dist, a, b));
            }
        }
        let (dab, a, b) = pick.expect("at least two active clusters");
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let nk = size[k] as f64;
            let v = ((na + nk) * d[k * n + a] + (nb + nk) * d[k * n + b] - nk * dab) / (na + nb + nk);
            d[k * n + a] = v;
            d[a * n + k] = v;
        }
        active[b] = false;
        size[a] += size[b];
        parent[b] = a;
        for k in (0..n).filter(|&k| active[k]) {
            if k == a || nn[k].1 == a || nn[k].1 == b {
                nn[k] = nearest(&d, &active, k);
            } else if d[k * n + a] < nn[k].0 || (d[k * n + a] == nn[k].0 && a < nn[k].1) {
                nn[k] = (d[k * n + a], a);
            }
        }
    }
    let root = |mut i: usize| {
        while parent[i] != i {
            i = parent[i];
        }
        i
    };
    let mut label_of_root = BTreeMap::new();
    Ok((0..n)
        .map(|i| {
            let r = root(i);
            let next = label_of_root.len();
            *label_of_root.entry(r).or_insert(next)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: i64,
    pub label: u32,
    pub size: usize,
    pub centroid: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub predicted_count: usize,
    pub ground_truth_count: Option<usize>,
    pub clusters: Vec<ClusterSummary>,
}

impl CountReport {
    /// Clusters per class label.
    pub fn per_label(&self) -> BTreeMap<u32, usize> {
        let mut m = BTreeMap::new();
        for c in &self.clusters {
            *m.entry(c.label).or_insert(0) += 1;
        }
        m
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["cluster_id", "label", "size", "centroid_x", "centroid_y", "centroid_z"])?;
        for c in &self.clusters {
            w.write_record([
                c.id.to_string(),
                c.label.to_string(),
                c.size.to_string(),
                c.centroid[0].to_string(),
                c.centroid[1].to_string(),
                c.centroid[2].to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::io("count report", e.into_error()))
    }

    pub fn summary_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["predicted_count", "ground_truth_count"])?;
        w.write_record([
            self.predicted_count.to_string(),
            self.ground_truth_count.map(|g| g.to_string()).unwrap_or_default(),
        ])?;
        w.into_inner().map_err(|e| Error::io("count summary", e.into_error()))
    }
}

/// Distinct non-noise ids with their sizes and centroids.
pub fn count(points: &[Vec3], ids: &[i64]) -> Result<CountReport> {
    count_labeled(points, ids, &vec![0; ids.len()])
}

fn count_labeled(points: &[Vec3], ids: &[i64], labels: &[u32]) -> Result<CountReport> {
    if ids.len() != points.len() || labels.len() != points.len() {
        return Err(Error::Shape(format!("{} ids for {} points", ids.len(), points.len())));
    }
    let clusters: Vec<ClusterSummary> = groups(ids)
        .into_iter()
        .map(|(id, m)| {
            let c = centroid(points, &m);
            ClusterSummary {
                id,
                label: labels[m[0]],
                size: m.len(),
                centroid: [c.x, c.y, c.z],
            }
        })
        .collect();
    Ok(CountReport {
        predicted_count: clusters.len(),
        ground_truth_count: None,
        clusters,
    })
}

/// Outlier removal, downsampling, DBSCAN, merge and split for the points of
/// one label. Returns the downsampled points and their final ids.
fn count_one(points: &[Vec3], config: &ClusterConfig) -> Result<(Vec<Vec3>, Vec<i64>)> {
    let kept = remove_outliers(points, config);
    let down = voxel_downsample(&kept, config.leaf())?;
    let ids = dbscan(&down, config.eps(), config.dbscan_min_pts)?;
    let ids = merge_small(&down, &ids, config)?;
    let ids = split_large(&down, &ids, config)?;
    Ok((down, ids))
}

/// Runs the counting pipeline separately for every label in `cloud`.
/// Returns the downsampled cloud with cluster ids (unique across labels)
/// and the report.
pub fn count_cloud(cloud: &LabeledPointCloud, config: &ClusterConfig) -> Result<(LabeledPointCloud, CountReport)> {
    config.validate()?;
    cloud.validate()?;
    let mut by_label: BTreeMap<u32, Vec<Vec3>> = BTreeMap::new();
    for (p, &l) in cloud.points.iter().zip(&cloud.labels) {
        by_label.entry(l).or_default().push(*p);
    }
    let mut out = LabeledPointCloud::new(cloud.source);
    let mut offset = 0i64;
    for (label, pts) in by_label {
        let (down, ids) = count_one(&pts, config)?;
        let n = ids.iter().copied().max().map_or(0, |m| m + 1);
        for (p, id) in down.into_iter().zip(ids) {
            out.push(p, label, if id == NOISE { NOISE } else { id + offset });
        }
        offset += n;
    }
    let report = count_labeled(&out.points, &out.cluster_ids, &out.labels)?;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, step: f64) -> Vec<Vec3> {
        (0..n).map(|i| Vec3::new(i as f64 * step, 0.0, 0.0)).collect()
    }

    #[test]
    fn collinear_points_form_one_cluster() {
        assert_eq!(dbscan(&line(3, 0.5), 1.0, 2).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn isolated_point_is_noise() {
        assert_eq!(dbscan(&[Vec3::zeros()], 1.0, 2).unwrap(), vec![NOISE]);
    }

    #[test]
    fn count_ignores_noise() {
        let p = line(4, 1.0);
        let r = count(&p, &[0, 0, 1, NOISE]).unwrap();
        assert_eq!(r.predicted_count, 2);
        assert_eq!(count(&[], &[]).unwrap().predicted_count, 0);
    }

    #[test]
    fn voxel_midpoint() {
        let d = voxel_downsample(&[Vec3::new(0.1, 0.1, 0.1), Vec3::new(0.3, 0.3, 0.3)], 1.0).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d[0] - Vec3::new(0.2, 0.2, 0.2)).norm() < 1e-15);
    }

    #[test]
    fn agglomerative_trivial_cases() {
        let p = line(5, 1.0);
        assert_eq!(agglomerative(&p, 5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(agglomerative(&p, 1).unwrap(), vec![0; 5]);
        assert!(agglomerative(&p, 6).is_err());
    }

    #[test]
    fn split_count_rule() {
        assert_eq!(split_count(440, 100.0), 4);
        assert_eq!(split_count(200, 100.0), 2);
        assert_eq!(split_count(170, 100.0), 2);
        assert_eq!(split_count(300, 100.0), 3);
    }

    #[test]
    fn even_median_averages_middle_pair() {
        assert_eq!(median_size(&[0, 0, 1, 1, 1, 1]), Some(3.0));
        assert_eq!(median_size(&[NOISE]), None);
    }

    #[test]
    fn outliers_pass_through_when_too_few_points() {
        let cfg = ClusterConfig::default();
        let p = line(10, 1.0);
        assert_eq!(remove_outliers(&p, &cfg), p);
    }

    #[test]
    fn grid_points_with_shared_coordinates_are_handled() {
        let mut p = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                for k in 0..20 {
                    p.push(Vec3::new(i as f64, j as f64, k as f64) * 0.01);
                }
            }
        }
        let cfg = ClusterConfig::default();
        assert!(remove_outliers(&p, &cfg).len() > 7000);
        let ids = dbscan(&p, 0.015, 5).unwrap();
        assert!(ids.iter().all(|&i| i == 0));
    }

    #[test]
    fn large_grid_shell_is_handled() {
        // dense lattice samples on two shells, like a thresholded density grid
        let mut p = Vec::new();
        let h = 0.0125;
        for c in [-0.5, 0.5] {
            for i in -20..=20 {
                for j in -20..=20 {
                    for k in -20..=20 {
                        let q = Vec3::new(i as f64, j as f64, k as f64) * h;
                        let r = q.norm();
                        if (0.15..0.25).contains(&r) {
                            p.push(q + Vec3::new(c, 0.0, 0.0));
                        }
                    }
                }
            }
        }
        assert!(p.len() > 20_000);
        let cloud = LabeledPointCloud::from_points(p, crate::cloud::SourceTag::Invnerf);
        let (_, report) = count_cloud(&cloud, &ClusterConfig::default()).unwrap();
        assert_eq!(report.predicted_count, 2);
    }
}
