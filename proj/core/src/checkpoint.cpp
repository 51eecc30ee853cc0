#include "ganmem/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace ganmem {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string u64_hex(uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

uint64_t hex_u64(const std::string& s) { return std::stoull(s, nullptr, 16); }

struct BlobWriter {
  fs::path root;
  json blobs = json::array();

  void write(const std::string& name, const Tensor& t) {
    fs::path p = root / (name + ".bin");
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + p.string());
    std::vector<float> buf(static_cast<size_t>(t.size()));
    for (int64_t i = 0; i < t.size(); ++i) buf[static_cast<size_t>(i)] =
        static_cast<float>(t[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["dtype"] = "f32";
    blobs.push_back(std::move(e));
  }
};

struct BlobReader {
  fs::path root;
  std::map<std::string, std::vector<int>> shapes;

  Tensor read(const std::string& name) const {
    auto it = shapes.find(name);
    if (it == shapes.end())
      throw std::runtime_error("checkpoint: blob not in manifest: " + name);
    fs::path p = root / (name + ".bin");
    std::ifstream f(p, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("checkpoint: missing blob file " + p.string());
    int64_t n = Tensor::numel(it->second);
    if (f.tellg() != static_cast<std::streamoff>(n * sizeof(float)))
      throw std::runtime_error("checkpoint: blob size mismatch for " + name);
    f.seekg(0);
    std::vector<float> buf(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    Tensor t(it->second);
    for (int64_t i = 0; i < n; ++i) t[i] = buf[static_cast<size_t>(i)];
    return t;
  }
};

void save_layers(BlobWriter& w, const std::string& prefix,
                 const std::vector<Layer>& layers) {
  for (const auto& l : layers) {
    std::string base = prefix + "/" + l.path;
    if (l.kind == LayerKind::FC) {
      w.write(base + "/W", l.fc.W);
      w.write(base + "/b", l.fc.b);
    } else {
      w.write(base + "/K", l.conv.K);
      w.write(base + "/b", l.conv.b);
    }
    if (l.modulated) {
      w.write(base + "/stats_mean", l.stats.mean);
      w.write(base + "/stats_std", l.stats.std);
    }
  }
}

void load_layers(const BlobReader& r, const std::string& prefix,
                 std::vector<Layer>& layers) {
  for (auto& l : layers) {
    std::string base = prefix + "/" + l.path;
    if (l.kind == LayerKind::FC) {
      l.fc.W = r.read(base + "/W");
      l.fc.b = r.read(base + "/b");
    } else {
      l.conv.K = r.read(base + "/K");
      l.conv.b = r.read(base + "/b");
    }
    if (l.modulated) {
      l.stats.mean = r.read(base + "/stats_mean");
      l.stats.std = r.read(base + "/stats_std");
    }
  }
}

void save_style(BlobWriter& w, const std::string& prefix, const StyleSet& s) {
  for (const auto& [path, st] : s.fc) {
    w.write(prefix + "/" + path + "/gamma", st.gamma);
    w.write(prefix + "/" + path + "/beta", st.beta);
    w.write(prefix + "/" + path + "/b_fc", st.b_fc);
  }
  for (const auto& [path, st] : s.conv) {
    w.write(prefix + "/" + path + "/Gamma", st.Gamma);
    w.write(prefix + "/" + path + "/B", st.B);
    w.write(prefix + "/" + path + "/b_conv", st.b_conv);
  }
}

void load_style(const BlobReader& r, const std::string& prefix, StyleSet& s) {
  for (auto& [path, st] : s.fc) {
    st.gamma = r.read(prefix + "/" + path + "/gamma");
    st.beta = r.read(prefix + "/" + path + "/beta");
    st.b_fc = r.read(prefix + "/" + path + "/b_fc");
  }
  for (auto& [path, st] : s.conv) {
    st.Gamma = r.read(prefix + "/" + path + "/Gamma");
    st.B = r.read(prefix + "/" + path + "/B");
    st.b_conv = r.read(prefix + "/" + path + "/b_conv");
  }
}

json arch_to_json(const ArchConfig& c) {
  json j;
  j["noise_dim"] = c.noise_dim;
  j["image_size"] = c.image_size;
  j["channels"] = c.channels;
  j["n_blocks"] = c.n_blocks;
  j["block_channel_schedule"] = c.block_channel_schedule;
  j["conditional"] = c.conditional;
  j["n_classes_per_task"] = c.n_classes_per_task;
  return j;
}

ArchConfig arch_from_json(const json& j) {
  ArchConfig c;
  c.noise_dim = j.at("noise_dim");
  c.image_size = j.at("image_size");
  c.channels = j.at("channels");
  c.n_blocks = j.at("n_blocks");
  c.block_channel_schedule = j.at("block_channel_schedule").get<std::vector<int>>();
  c.conditional = j.at("conditional");
  c.n_classes_per_task = j.at("n_classes_per_task");
  return c;
}

json hyper_to_json(const TrainHyper& h) {
  json j;
  j["lr"] = h.lr;
  j["adam_beta1"] = h.adam_beta1;
  j["adam_beta2"] = h.adam_beta2;
  j["r1_gamma"] = h.r1_gamma;
  j["batch_size"] = h.batch_size;
  j["steps"] = h.steps;
  j["seed"] = u64_hex(h.seed);
  j["fid_every"] = h.fid_every;
  return j;
}

TrainHyper hyper_from_json(const json& j) {
  TrainHyper h;
  h.lr = j.at("lr");
  h.adam_beta1 = j.at("adam_beta1");
  h.adam_beta2 = j.at("adam_beta2");
  h.r1_gamma = j.at("r1_gamma");
  h.batch_size = j.at("batch_size");
  h.steps = j.at("steps");
  h.seed = hex_u64(j.at("seed"));
  h.fid_every = j.at("fid_every");
  return h;
}

}  // namespace

void save_checkpoint(const std::string& dir, const Checkpoint& cp) {
  fs::create_directories(dir);
  BlobWriter w{fs::path(dir)};

  json manifest;
  manifest["format_version"] = cp.format_version;
  manifest["arch"] = arch_to_json(cp.config);
  manifest["hyper"] = hyper_to_json(cp.hyper);

  save_layers(w, "base/G", cp.base.gen);
  save_layers(w, "base/D", cp.base.disc);

  json tasks = json::array();
  for (const auto& [id, s] : cp.styles) {
    json t;
    t["task_id"] = id;
    t["class_count"] = s.class_count;
    t["compressed"] = false;
    tasks.push_back(std::move(t));
    save_style(w, "task" + std::to_string(id), s);
  }
  for (const auto& [id, cs] : cp.compressed) {
    json t;
    t["task_id"] = id;
    t["class_count"] = cs.class_count;
    t["compressed"] = true;
    json fac = json::object();
    for (const auto& [key, f] : cs.factors) fac[key] = f.kb_snapshot;
    t["factors"] = std::move(fac);
    tasks.push_back(std::move(t));
    std::string prefix = "task" + std::to_string(id);
    save_style(w, prefix, cs.dense);
    for (const auto& [key, f] : cs.factors) {
      w.write(prefix + "/" + key + ".lambda", f.lambda);
      w.write(prefix + "/" + key + ".U", f.U);
      w.write(prefix + "/" + key + ".s", f.s);
      w.write(prefix + "/" + key + ".V", f.V);
    }
  }
  manifest["tasks"] = std::move(tasks);

  json kb;
  json entries = json::object();
  for (const auto& [key, e] : cp.kb.entries) {
    entries[key] = e.width();
    w.write("kb/" + key + "/L", e.L);
    w.write("kb/" + key + "/R", e.R);
  }
  kb["entries"] = std::move(entries);
  json snaps = json::object();
  for (const auto& [task, widths] : cp.kb.snapshots) {
    json s = json::object();
    for (const auto& [key, wdt] : widths) s[key] = wdt;
    snaps[std::to_string(task)] = std::move(s);
  }
  kb["snapshots"] = std::move(snaps);
  manifest["kb"] = std::move(kb);

  manifest["blobs"] = std::move(w.blobs);

  std::ofstream f(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot write manifest in " + dir);
  f << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "manifest.json");
  if (!f) throw std::runtime_error("checkpoint: no manifest in " + dir);
  json manifest = json::parse(f);

  Checkpoint cp;
  cp.format_version = manifest.at("format_version");
  if (cp.format_version != 1)
    throw std::runtime_error("checkpoint: unsupported format version");
  cp.config = arch_from_json(manifest.at("arch"));
  cp.hyper = hyper_from_json(manifest.at("hyper"));

  BlobReader r{fs::path(dir)};
  for (const auto& b : manifest.at("blobs"))
    r.shapes[b.at("name")] = b.at("shape").get<std::vector<int>>();

  // rebuild the layer skeleton, then overwrite every tensor from blobs
  cp.base = build_models(cp.config, 0);
  load_layers(r, "base/G", cp.base.gen);
  load_layers(r, "base/D", cp.base.disc);
  uint64_t fp = cp.base.arch_fingerprint();

  for (const auto& t : manifest.at("tasks")) {
    int id = t.at("task_id");
    int cc = t.at("class_count");
    std::string prefix = "task" + std::to_string(id);
    if (!t.at("compressed").get<bool>()) {
      StyleSet s = make_new_style(cp.base, id, cc);
      load_style(r, prefix, s);
      s.arch_fingerprint = fp;
      cp.styles[id] = std::move(s);
    } else {
      CompressedStyle cs;
      cs.task_id = id;
      cs.class_count = cc;
      cs.arch_fingerprint = fp;
      cs.dense = make_new_style(cp.base, id, cc);
      load_style(r, prefix, cs.dense);
      for (const auto& [key, snap] : t.at("factors").items()) {
        MatrixFactor mf;
        mf.lambda = r.read(prefix + "/" + key + ".lambda");
        mf.U = r.read(prefix + "/" + key + ".U");
        mf.s = r.read(prefix + "/" + key + ".s");
        mf.V = r.read(prefix + "/" + key + ".V");
        mf.kb_snapshot = snap;
        cs.factors[key] = std::move(mf);
      }
      cp.compressed[id] = std::move(cs);
    }
  }

  const json& kb = manifest.at("kb");
  for (const auto& [key, width] : kb.at("entries").items()) {
    (void)width;
    KnowledgeBase::Entry e;
    e.L = r.read("kb/" + key + "/L");
    e.R = r.read("kb/" + key + "/R");
    cp.kb.entries[key] = std::move(e);
  }
  for (const auto& [task, widths] : kb.at("snapshots").items()) {
    std::map<std::string, int> m;
    for (const auto& [key, wdt] : widths.items()) m[key] = wdt;
    cp.kb.snapshots[std::stoi(task)] = std::move(m);
  }
  return cp;
}

uint64_t checkpoint_dir_hash(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : files) {
    std::string rel = fs::relative(p, dir).generic_string();
    h = fnv1a64(rel.data(), rel.size(), h);
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    std::string bytes = ss.str();
    h = fnv1a64(bytes.data(), bytes.size(), h);
  }
  return h;
}

}  // namespace ganmem
