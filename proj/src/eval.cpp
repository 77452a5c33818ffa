#include "learntri/eval.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

#include "learntri/error.hpp"
#include "learntri/random.hpp"

namespace learntri {

namespace {

bool joint_ok(const Pose3D& p, std::size_t j) {
  return j < p.joints.size() && (p.valid.empty() || p.valid[j]);
}

Vec3 pelvis_of(const Pose3D& p) {
  if (!joint_ok(p, p.pelvis_index)) {
    throw Error(ErrorCode::PelvisMissing, "pelvis joint is invalid");
  }
  return p.joints[p.pelvis_index];
}

}  // namespace

std::size_t MpjpeAccumulator::add(const Pose3D& pred, const Pose3D& gt) {
  Vec3 off_pred = Vec3::Zero();
  Vec3 off_gt = Vec3::Zero();
  if (relative_) {
    off_pred = pelvis_of(pred);
    off_gt = pelvis_of(gt);
  }
  std::size_t added = 0;
  const std::size_t J = std::max(pred.joints.size(), gt.joints.size());
  for (std::size_t j = 0; j < J; ++j) {
    if (!joint_ok(pred, j) || !joint_ok(gt, j)) {
      if (joint_ok(gt, j)) ++failures_;
      continue;
    }
    sum_mm_ += 1000.0 * ((pred.joints[j] - off_pred) - (gt.joints[j] - off_gt)).norm();
    ++added;
  }
  count_ += added;
  return added;
}

double MpjpeAccumulator::mean_mm() const {
  if (count_ == 0) throw Error(ErrorCode::NoValidJoints, "no jointly valid joints");
  return sum_mm_ / static_cast<double>(count_);
}

double mpjpe(const Pose3D& pred, const Pose3D& gt, bool relative) {
  MpjpeAccumulator acc(relative);
  acc.add(pred, gt);
  return acc.mean_mm();
}

bool SweepResult::non_increasing() const {
  for (std::size_t i = 1; i < mpjpe_mm.size(); ++i) {
    if (mpjpe_mm[i] > mpjpe_mm[i - 1]) return false;
  }
  return true;
}

SweepResult camera_subset_sweep(const Rig& rig, std::span<const Frame> frames,
                                const FrameMethod& method, std::span<const int> sizes,
                                int trials, std::uint64_t seed, int min_views) {
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
  if (frames.empty()) throw Error(ErrorCode::EmptyDataset, "sweep needs frames");
  for (const auto& f : frames) {
    if (!f.gt_pose) throw Error(ErrorCode::InvalidArgument, "sweep frames need ground truth");
  }
  const int C = static_cast<int>(rig.size());
  SweepResult out;
  out.trials = trials;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    const int size = sizes[s];
    if (size < min_views || size > C) {
      throw Error(ErrorCode::InvalidArgument,
                  "subset size " + std::to_string(size) + " outside [" +
                      std::to_string(min_views) + ", " + std::to_string(C) + "]");
    }
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(size)));
    std::map<std::vector<std::size_t>, std::pair<double, std::size_t>> cache;
    double total = 0.0;
    std::size_t failures = 0;
    for (int t = 0; t < trials; ++t) {
      // Partial Fisher-Yates; the subset is sorted so equal sets share a key.
      std::vector<std::size_t> idx(static_cast<std::size_t>(C));
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (int i = 0; i < size; ++i) {
        const auto r = static_cast<std::size_t>(i) +
                       static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(C - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[r]);
      }
      idx.resize(static_cast<std::size_t>(size));
      std::sort(idx.begin(), idx.end());

      auto it = cache.find(idx);
      if (it == cache.end()) {
        const Rig sub = rig.subset(idx);
        MpjpeAccumulator acc(false);
        for (const auto& f : frames) {
          const Frame sf = restrict_frame(f, idx);
          try {
            acc.add(method(sub, sf), *f.gt_pose);
          } catch (const Error&) {
            acc.add_failure(f.num_joints());
          }
        }
        double value = std::numeric_limits<double>::quiet_NaN();
        if (acc.count() > 0) value = acc.mean_mm();
        it = cache.emplace(idx, std::make_pair(value, acc.failures())).first;
      }
      total += it->second.first;
      failures += it->second.second;
    }
    out.sizes.push_back(size);
    out.mpjpe_mm.push_back(total / trials);
    out.failures.push_back(failures);
    out.distinct_subsets.push_back(cache.size());
  }
  return out;
}

}  // namespace learntri
