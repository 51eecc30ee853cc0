#include "ganmem/registry.hpp"

#include <stdexcept>

namespace ganmem {

uint64_t StyleSet::hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](int64_t v) { h = fnv1a64(&v, sizeof(v), h); };
  mix(task_id);
  mix(class_count);
  for (const auto& [path, s] : fc) {
    h = fnv1a64(path.data(), path.size(), h);
    h = tensor_hash(s.gamma, h);
    h = tensor_hash(s.beta, h);
    h = tensor_hash(s.b_fc, h);
  }
  for (const auto& [path, s] : conv) {
    h = fnv1a64(path.data(), path.size(), h);
    h = tensor_hash(s.Gamma, h);
    h = tensor_hash(s.B, h);
    h = tensor_hash(s.b_conv, h);
  }
  return h;
}

bool StyleSet::finite() const {
  for (const auto& [_, s] : fc)
    if (!s.gamma.all_finite() || !s.beta.all_finite() || !s.b_fc.all_finite())
      return false;
  for (const auto& [_, s] : conv)
    if (!s.Gamma.all_finite() || !s.B.all_finite() || !s.b_conv.all_finite())
      return false;
  return true;
}

StyleSet make_new_style(const BaseModel& base, int task_id, int class_count) {
  StyleSet s;
  s.task_id = task_id;
  s.class_count = class_count;
  s.arch_fingerprint = base.arch_fingerprint();
  for (const Layer* l : base.modulated_layers()) {
    if (l->kind == LayerKind::FC)
      s.fc[l->path] = init_new_fc_style(l->d_out(), class_count);
    else
      s.conv[l->path] = init_new_conv_style(l->d_out(), l->d_in());
  }
  return s;
}

StyleSet make_source_style(const BaseModel& base, int class_count) {
  StyleSet s;
  s.task_id = 0;
  s.class_count = class_count;
  s.arch_fingerprint = base.arch_fingerprint();
  for (const Layer* l : base.modulated_layers()) {
    if (l->kind == LayerKind::FC)
      s.fc[l->path] = init_source_fc_style(l->stats, class_count);
    else
      s.conv[l->path] = init_source_conv_style(l->stats);
  }
  return s;
}

bool BlockMask::covers(const std::string& layer_path) const {
  auto pos = layer_path.find("/B");
  if (pos == std::string::npos) return fc;  // FC head / input convs group with FC
  size_t i = pos + 2;
  int blk = 0;
  bool any = false;
  while (i < layer_path.size() && layer_path[i] >= '0' && layer_path[i] <= '9') {
    blk = blk * 10 + (layer_path[i] - '0');
    ++i;
    any = true;
  }
  if (!any) return fc;
  if (blocks.empty()) return true;
  if (blk >= static_cast<int>(blocks.size())) return false;
  return blocks[static_cast<size_t>(blk)];
}

TaskRegistry::TaskRegistry(const BaseModel& base)
    : base_(&base), fingerprint_(base.arch_fingerprint()) {
  StyleSet src = make_source_style(base);
  tasks_.emplace(0, std::move(src));
}

namespace {

void check_shapes(const BaseModel& base, const StyleSet& s) {
  for (const Layer* l : base.modulated_layers()) {
    if (l->kind == LayerKind::FC) {
      auto it = s.fc.find(l->path);
      if (it == s.fc.end())
        throw std::invalid_argument("StyleSet missing FC layer " + l->path);
      if (it->second.gamma.size() != l->d_out() ||
          it->second.beta.size() != l->d_out() ||
          it->second.b_fc.rank() != 2 || it->second.b_fc.dim(1) != l->d_out() ||
          it->second.b_fc.dim(0) != s.class_count)
        throw std::invalid_argument("StyleSet shape mismatch at " + l->path);
    } else {
      auto it = s.conv.find(l->path);
      if (it == s.conv.end())
        throw std::invalid_argument("StyleSet missing Conv layer " + l->path);
      if (it->second.Gamma.dim(0) != l->d_out() ||
          it->second.Gamma.dim(1) != l->d_in() ||
          !it->second.Gamma.same_shape(it->second.B) ||
          it->second.b_conv.size() != l->d_out())
        throw std::invalid_argument("StyleSet shape mismatch at " + l->path);
    }
  }
}

}  // namespace

void TaskRegistry::register_task(const StyleSet& style) {
  if (tasks_.count(style.task_id))
    throw std::invalid_argument("register_task: duplicate task id " +
                                std::to_string(style.task_id));
  if (style.arch_fingerprint != fingerprint_)
    throw std::invalid_argument("register_task: architecture fingerprint mismatch");
  if (!style.finite())
    throw std::invalid_argument("register_task: non-finite style values");
  check_shapes(*base_, style);
  tasks_.emplace(style.task_id, style);
}

const StyleSet& TaskRegistry::get(int task_id) const {
  auto it = tasks_.find(task_id);
  if (it == tasks_.end())
    throw std::out_of_range("unknown task " + std::to_string(task_id));
  return it->second;
}

bool TaskRegistry::has(int task_id) const { return tasks_.count(task_id) > 0; }

std::vector<int> TaskRegistry::task_ids() const {
  std::vector<int> ids;
  for (const auto& [id, _] : tasks_) ids.push_back(id);
  return ids;
}

uint64_t TaskRegistry::hash_excluding(int task_id) const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [id, s] : tasks_) {
    if (id == task_id) continue;
    uint64_t sh = s.hash();
    h = fnv1a64(&sh, sizeof(sh), h);
  }
  return h;
}

StyleSet TaskRegistry::compose(int task_id, const GroupMask& groups,
                               const BlockMask& blocks) const {
  const StyleSet& task = get(task_id);
  const StyleSet& src = get(0);
  StyleSet out = src;  // start from source identity
  out.task_id = task.task_id;
  out.class_count = task.class_count;
  for (auto& [path, s] : out.fc) {
    // source style carries class_count rows of zeros for b_fc
    s.b_fc = Tensor::zeros({task.class_count, s.b_fc.dim(1)});
    if (!blocks.covers(path)) continue;
    const FCStyle& ts = task.fc.at(path);
    if (groups.scales) s.gamma = ts.gamma;
    if (groups.shifts) s.beta = ts.beta;
    if (groups.biases) s.b_fc = ts.b_fc;
  }
  for (auto& [path, s] : out.conv) {
    if (!blocks.covers(path)) continue;
    const ConvStyle& ts = task.conv.at(path);
    if (groups.scales) s.Gamma = ts.Gamma;
    if (groups.shifts) s.B = ts.B;
    if (groups.biases) s.b_conv = ts.b_conv;
  }
  return out;
}

StyleSet TaskRegistry::interpolate(int task_a, int task_b, double lambda) const {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("interpolate: lambda must be in [0,1]");
  const StyleSet& a = get(task_a);
  const StyleSet& b = get(task_b);
  if (a.class_count != b.class_count)
    throw std::invalid_argument("interpolate: class count mismatch");
  if (lambda == 0.0) return a;
  if (lambda == 1.0) return b;
  auto lerp = [lambda](const Tensor& x, const Tensor& y) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.size(); ++i)
      out[i] = (1.0 - lambda) * x[i] + lambda * y[i];
    return out;
  };
  StyleSet out = a;
  out.task_id = task_a;
  for (auto& [path, s] : out.fc) {
    const FCStyle& bs = b.fc.at(path);
    s.gamma = lerp(s.gamma, bs.gamma);
    s.beta = lerp(s.beta, bs.beta);
    s.b_fc = lerp(s.b_fc, bs.b_fc);
  }
  for (auto& [path, s] : out.conv) {
    const ConvStyle& bs = b.conv.at(path);
    s.Gamma = lerp(s.Gamma, bs.Gamma);
    s.B = lerp(s.B, bs.B);
    s.b_conv = lerp(s.b_conv, bs.b_conv);
  }
  return out;
}

}  // namespace ganmem
