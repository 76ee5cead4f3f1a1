//! MNIST ingestion, input normalization, and the partitioning schemes that
//! produce each device's local dataset.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use flate2::read::GzDecoder;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Mean and standard deviation of MNIST training pixels on the [0,1] scale.
pub const MNIST_MEAN: f64 = 0.1307;
pub const MNIST_STD: f64 = 0.3081;

/// How raw [0,1] pixels are presented to the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// Feed pixels as stored, in [0,1].
    UnitRange,
    /// Standard-score pixels with the MNIST mean and standard deviation.
    Standardize,
}

impl Normalization {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Normalization::UnitRange => x,
            Normalization::Standardize => (x - MNIST_MEAN) / MNIST_STD,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub pixels: Array1<f64>,
    pub label: u8,
}

/// An ordered set of samples; pixels are stored on the [0,1] scale.
#[derive(Clone, Debug)]
pub struct Dataset {
    images: Array2<f64>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn from_parts(images: Array2<f64>, labels: Vec<u8>) -> Result<Self> {
        if images.nrows() != labels.len() {
            return Err(Error::IdxCountMismatch {
                images: images.nrows(),
                labels: labels.len(),
            });
        }
        if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
            return Err(Error::LabelOutOfRange { index, value });
        }
        Ok(Dataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixel_dim(&self) -> usize {
        self.images.ncols()
    }

    pub fn images(&self) -> ArrayView2<'_, f64> {
        self.images.view()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sample(&self, index: usize) -> Sample {
        Sample {
            pixels: self.images.row(index).to_owned(),
            label: self.labels[index],
        }
    }

    /// Whole set as one normalized input matrix.
    pub fn input_matrix(&self, norm: Normalization) -> Array2<f64> {
        self.images.mapv(|x| norm.apply(x))
    }

    /// Normalized input rows for `indices`.
    pub fn gather_inputs(&self, indices: &[u32], norm: Normalization) -> Array2<f64> {
        gather_rows(self.images.view(), indices, norm)
    }

    pub fn gather_labels(&self, indices: &[u32]) -> Vec<u8> {
        indices.iter().map(|&i| self.labels[i as usize]).collect()
    }
}

/// Copy (and normalize) the selected rows of an input matrix.
pub fn gather_rows(inputs: ArrayView2<'_, f64>, indices: &[u32], norm: Normalization) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), inputs.ncols()));
    for (mut dst, &i) in out.axis_iter_mut(Axis(0)).zip(indices) {
        let src = inputs.row(i as usize);
        match norm {
            Normalization::UnitRange => dst.assign(&src),
            Normalization::Standardize => {
                for (d, &s) in dst.iter_mut().zip(src.iter()) {
                    *d = norm.apply(s);
                }
            }
        }
    }
    out
}

fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(BufReader::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

fn truncated(kind: &'static str, path: &Path, detail: impl Into<String>) -> Error {
    Error::IdxTruncated {
        kind,
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Load an image/label file pair in the big-endian IDX container format;
/// image bytes are scaled by 1/255 into [0,1]. Files ending in `.gz` are
/// decompressed transparently.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut r = open_maybe_gz(images_path)?;
    let magic = r
        .read_u32::<BigEndian>()
        .map_err(|e| truncated("image", images_path, format!("missing magic: {e}")))?;
    if magic != IMAGE_MAGIC {
        return Err(Error::IdxMagic {
            kind: "image",
            path: images_path.to_path_buf(),
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = r
        .read_u32::<BigEndian>()
        .map_err(|e| truncated("image", images_path, format!("missing count: {e}")))? as usize;
    let rows = r
        .read_u32::<BigEndian>()
        .map_err(|e| truncated("image", images_path, format!("missing row count: {e}")))? as usize;
    let cols = r
        .read_u32::<BigEndian>()
        .map_err(|e| truncated("image", images_path, format!("missing column count: {e}")))? as usize;
    let pixel_dim = rows * cols;
    let mut bytes = vec![0u8; count * pixel_dim];
    r.read_exact(&mut bytes).map_err(|e| {
        truncated(
            "image",
            images_path,
            format!("expected {} pixel bytes: {e}", count * pixel_dim),
        )
    })?;

    let mut lr = open_maybe_gz(labels_path)?;
    let magic = lr
        .read_u32::<BigEndian>()
        .map_err(|e| truncated("label", labels_path, format!("missing magic: {e}")))?;
    if magic != LABEL_MAGIC {
        return Err(Error::IdxMagic {
            kind: "label",
            path: labels_path.to_path_buf(),
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let label_count = lr
        .read_u32::<BigEndian>()
        .map_err(|e| truncated("label", labels_path, format!("missing count: {e}")))? as usize;
    if label_count != count {
        return Err(Error::IdxCountMismatch {
            images: count,
            labels: label_count,
        });
    }
    let mut labels = vec![0u8; label_count];
    lr.read_exact(&mut labels).map_err(|e| {
        truncated(
            "label",
            labels_path,
            format!("expected {label_count} label bytes: {e}"),
        )
    })?;

    let images = Array2::from_shape_vec(
        (count, pixel_dim),
        bytes.into_iter().map(|b| f64::from(b) / 255.0).collect(),
    )
    .expect("shape follows from construction");
    Dataset::from_parts(images, labels)
}

/// Per-device sample index lists.
#[derive(Clone, Debug)]
pub struct DevicePartition {
    device_indices: Vec<Vec<u32>>,
}

impl DevicePartition {
    pub fn num_devices(&self) -> usize {
        self.device_indices.len()
    }

    pub fn indices(&self, device: usize) -> &[u32] {
        &self.device_indices[device]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.device_indices.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.device_indices.iter().map(Vec::len).sum()
    }
}

/// Seeded uniform shuffle followed by contiguous near-equal splits (sizes
/// differ by at most one; the remainder goes to the lowest device ids).
pub fn partition_iid<R: Rng>(data: &Dataset, num_devices: usize, rng: &mut R) -> Result<DevicePartition> {
    if num_devices == 0 {
        return Err(Error::Partition("device count must be positive".into()));
    }
    let n = data.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(rng);
    let base = n / num_devices;
    let remainder = n % num_devices;
    let mut device_indices = Vec::with_capacity(num_devices);
    let mut cursor = 0;
    for device in 0..num_devices {
        let take = base + usize::from(device < remainder);
        device_indices.push(order[cursor..cursor + take].to_vec());
        cursor += take;
    }
    Ok(DevicePartition { device_indices })
}

/// Label-sorted sharding: stable-sort sample indices by label, split into
/// `num_devices * shards_per_device` equal contiguous shards, then deal
/// shards to devices by one seeded permutation (consecutive blocks of the
/// permutation go to consecutive devices).
pub fn partition_pathological_noniid<R: Rng>(
    data: &Dataset,
    num_devices: usize,
    shards_per_device: usize,
    rng: &mut R,
) -> Result<DevicePartition> {
    if num_devices == 0 || shards_per_device == 0 {
        return Err(Error::Partition(
            "device count and shards per device must be positive".into(),
        ));
    }
    let n = data.len();
    let num_shards = num_devices * shards_per_device;
    if n % num_shards != 0 {
        return Err(Error::Partition(format!(
            "{n} samples cannot be split into {num_shards} equal shards"
        )));
    }
    let mut sorted: Vec<u32> = (0..n as u32).collect();
    sorted.sort_by_key(|&i| data.labels[i as usize]);
    let mut shard_order: Vec<u32> = (0..num_shards as u32).collect();
    shard_order.shuffle(rng);
    Ok(deal_shards(&sorted, num_devices, shards_per_device, &shard_order))
}

fn deal_shards(
    sorted: &[u32],
    num_devices: usize,
    shards_per_device: usize,
    shard_order: &[u32],
) -> DevicePartition {
    let shard_size = sorted.len() / shard_order.len();
    let device_indices = (0..num_devices)
        .map(|device| {
            let mut indices = Vec::with_capacity(shards_per_device * shard_size);
            for j in 0..shards_per_device {
                let shard = shard_order[device * shards_per_device + j] as usize;
                indices.extend_from_slice(&sorted[shard * shard_size..(shard + 1) * shard_size]);
            }
            indices
        })
        .collect();
    DevicePartition { device_indices }
}

/// A fresh seeded shuffle of the device's indices cut into ceil(n/B)
/// batches; the last batch may be short.
pub fn epoch_batches<R: Rng>(device_indices: &[u32], batch_size: usize, rng: &mut R) -> Vec<Vec<u32>> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut order = device_indices.to_vec();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[u32]>::to_vec).collect()
}

/// The device's indices cut into batches in stored order, without
/// reshuffling (the split-once behavior).
pub fn fixed_batches(device_indices: &[u32], batch_size: usize) -> Vec<Vec<u32>> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    device_indices.chunks(batch_size).map(<[u32]>::to_vec).collect()
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use tempfile::tempdir;

    fn synthetic(n: usize, labels_fn: impl Fn(usize) -> u8) -> Dataset {
        let images = Array2::from_shape_fn((n, 4), |(i, j)| ((i * 7 + j) % 256) as f64 / 255.0);
        let labels = (0..n).map(labels_fn).collect();
        Dataset::from_parts(images, labels).unwrap()
    }

    #[test]
    fn idx_fixture_loads_exact_pixel_values() {
        let dir = tempdir().unwrap();
        let images = vec![vec![0u8, 17, 255, 128], vec![1, 2, 3, 4]];
        let labels = vec![3u8, 9];
        let (ip, lp) = fixtures::write_idx_pair(dir.path(), "tiny", &images, &labels, 2, 2, false);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.pixel_dim(), 4);
        // Independent expectation straight from the raw bytes.
        for (i, img) in images.iter().enumerate() {
            for (j, &b) in img.iter().enumerate() {
                assert_eq!(ds.images()[(i, j)], f64::from(b) / 255.0);
            }
        }
        assert_eq!(ds.labels(), &labels[..]);
        assert_eq!(ds.sample(1).label, 9);
    }

    #[test]
    fn idx_gzip_roundtrip_matches_plain() {
        let dir = tempdir().unwrap();
        let images = vec![vec![5u8; 9], vec![250; 9]];
        let labels = vec![0u8, 1];
        let (ip, lp) = fixtures::write_idx_pair(dir.path(), "p", &images, &labels, 3, 3, false);
        let (gip, glp) = fixtures::write_idx_pair(dir.path(), "g", &images, &labels, 3, 3, true);
        let a = load_idx(&ip, &lp).unwrap();
        let b = load_idx(&gip, &glp).unwrap();
        assert_eq!(a.images(), b.images());
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn idx_bad_label_magic() {
        let dir = tempdir().unwrap();
        let (ip, _) = fixtures::write_idx_pair(dir.path(), "a", &[vec![0u8; 4]], &[1], 2, 2, false);
        // Point the label argument at an images file: wrong magic.
        let err = load_idx(&ip, &ip).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad label magic"), "got: {msg}");
    }

    #[test]
    fn idx_bad_image_magic() {
        let dir = tempdir().unwrap();
        let (_, lp) = fixtures::write_idx_pair(dir.path(), "a", &[vec![0u8; 4]], &[1], 2, 2, false);
        let err = load_idx(&lp, &lp).unwrap_err();
        assert!(err.to_string().contains("bad image magic"), "got: {err}");
    }

    #[test]
    fn idx_truncated_and_count_mismatch() {
        let dir = tempdir().unwrap();
        let (ip, lp) = fixtures::write_idx_pair(dir.path(), "a", &vec![vec![0u8; 4]; 3], &[1, 2, 3], 2, 2, false);
        let bytes = std::fs::read(&ip).unwrap();
        std::fs::write(&ip, &bytes[..bytes.len() - 2]).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(matches!(err, Error::IdxTruncated { kind: "image", .. }), "got: {err}");

        let (ip2, _) = fixtures::write_idx_pair(dir.path(), "b", &vec![vec![0u8; 4]; 2], &[1, 2], 2, 2, false);
        let err = load_idx(&ip2, &lp).unwrap_err();
        assert!(matches!(err, Error::IdxCountMismatch { images: 2, labels: 3 }), "got: {err}");
    }

    #[test]
    fn iid_partition_is_balanced_disjoint_and_seeded() {
        let ds = synthetic(600, |i| (i % 10) as u8);
        let mut r = rng::stream(1, "partition");
        let p = partition_iid(&ds, 100, &mut r).unwrap();
        assert_eq!(p.num_devices(), 100);
        assert!(p.sizes().iter().all(|&s| s == 6));
        let mut seen: Vec<u32> = (0..100).flat_map(|d| p.indices(d).to_vec()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..600).collect::<Vec<_>>());

        let p2 = partition_iid(&ds, 100, &mut rng::stream(1, "partition")).unwrap();
        assert_eq!(p.indices(17), p2.indices(17));
        let p3 = partition_iid(&ds, 100, &mut rng::stream(2, "partition")).unwrap();
        assert_ne!(p.indices(17), p3.indices(17));
    }

    #[test]
    fn iid_partition_whole_dataset_on_one_device() {
        let ds = synthetic(50, |_| 0);
        let p = partition_iid(&ds, 1, &mut rng::stream(0, "partition")).unwrap();
        assert_eq!(p.sizes(), vec![50]);
    }

    #[test]
    fn iid_partition_uneven_sizes_differ_by_at_most_one() {
        let ds = synthetic(10, |_| 0);
        let p = partition_iid(&ds, 3, &mut rng::stream(0, "partition")).unwrap();
        assert_eq!(p.sizes(), vec![4, 3, 3]);
        assert!(partition_iid(&ds, 0, &mut rng::stream(0, "partition")).is_err());
    }

    #[test]
    fn noniid_hand_case_identity_permutation() {
        let sorted = [0u32, 1, 2, 3];
        let p = deal_shards(&sorted, 2, 2, &[0, 1, 2, 3]);
        assert_eq!(p.indices(0), &[0, 1]);
        assert_eq!(p.indices(1), &[2, 3]);
    }

    #[test]
    fn noniid_preserves_label_multiset_and_limits_labels() {
        let ds = synthetic(6000, |i| (i / 600) as u8); // 600 of each label
        let mut r = rng::stream(3, "partition");
        let p = partition_pathological_noniid(&ds, 10, 2, &mut r).unwrap();
        assert!(p.sizes().iter().all(|&s| s == 600));
        let mut global = vec![0usize; 10];
        for d in 0..10 {
            let mut distinct = std::collections::BTreeSet::new();
            for &i in p.indices(d) {
                let l = ds.labels()[i as usize];
                distinct.insert(l);
                global[l as usize] += 1;
            }
            assert!(distinct.len() <= 4, "device {d} saw {distinct:?}");
        }
        assert_eq!(global, vec![600; 10]);
    }

    #[test]
    fn noniid_rejects_indivisible_shards() {
        let ds = synthetic(10, |_| 0);
        assert!(partition_pathological_noniid(&ds, 3, 2, &mut rng::stream(0, "partition")).is_err());
    }

    #[test]
    fn epoch_batches_split_and_cover() {
        let indices: Vec<u32> = (100..700).collect();
        let batches = epoch_batches(&indices, 10, &mut rng::stream(0, "batch"));
        assert_eq!(batches.len(), 60);
        assert!(batches.iter().all(|b| b.len() == 10));
        let mut all: Vec<u32> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, indices);

        let short = epoch_batches(&[1, 2, 3, 4, 5], 10, &mut rng::stream(0, "batch"));
        assert_eq!(short.len(), 1);
        assert_eq!(short[0].len(), 5);
    }

    #[test]
    fn standardize_transform() {
        assert_eq!(Normalization::UnitRange.apply(0.5), 0.5);
        let z = Normalization::Standardize.apply(0.1307);
        assert!(z.abs() < 1e-12);
    }
}
