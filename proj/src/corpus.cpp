#include "respoof/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"
#include "respoof/errors.hpp"
#include "respoof/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace respoof {

const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw RejectedInput("unknown split: " + s);
}

void CorpusParams::validate() const {
  if (total_identities() < 3) throw RejectedInput("corpus: need at least 3 identities");
  if (train_identities < 1 || val_identities < 1 || test_identities < 1)
    throw RejectedInput("corpus: every split needs at least one identity");
  if (per_train_identity < 1 || per_test_identity < 1)
    throw RejectedInput("corpus: per-identity counts must be >= 1");
  if (scene_px < 64) throw RejectedInput("corpus: scene_px too small");
}

std::vector<int> Corpus::indices(Split s) const {
  std::vector<int> out;
  for (size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == s) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<std::string> Corpus::identities(Split s) const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& sample : samples) {
    if (sample.split == s && seen.insert(sample.identity).second)
      out.push_back(sample.identity);
  }
  return out;
}

Corpus generate_corpus(const CorpusParams& params, Rng rng, const ChannelSpec& spec) {
  params.validate();
  spec.validate();
  Corpus corpus;
  corpus.params = params;

  int id_counter = 0;
  auto make_identity = [&](Split split, int per_identity) {
    char name[16];
    std::snprintf(name, sizeof name, "id%02d", id_counter++);
    Rng id_rng = rng.substream(std::string("identity/") + name);
    const IdentityParams idp = sample_identity(id_rng);
    for (int k = 0; k < per_identity; ++k) {
      SpoofSample s;
      s.identity = name;
      s.split = split;
      char sid[32];
      std::snprintf(sid, sizeof sid, "%s_s%03d", name, k);
      s.id = sid;
      Rng sample_rng = rng.substream(std::string("sample/") + s.id);
      const SceneJitter jit = sample_jitter(sample_rng);
      RenderedScene rs = render_scene(idp, jit, params.scene_px);
      s.scene = quantize(rs.scene);
      s.box = rs.box;
      // crop from the quantized scene so scene[box] == original bit-exactly
      {
        Image8 orig(s.box.h, s.box.w);
        for (int y = 0; y < s.box.h; ++y)
          for (int x = 0; x < s.box.w; ++x)
            for (int c = 0; c < 3; ++c)
              orig.data[(static_cast<size_t>(y) * s.box.w + x) * 3 + c] =
                  s.scene.data[(static_cast<size_t>(s.box.y + y) * s.scene.width +
                                (s.box.x + x)) * 3 + c];
        s.original = std::move(orig);
      }
      Rng spoof_rng = rng.substream(std::string("spoof/") + s.id);
      s.spoofed = quantize(rebroadcast(dequantize(s.original), spec, spoof_rng));
      corpus.samples.push_back(std::move(s));
    }
  };

  for (int i = 0; i < params.train_identities; ++i) make_identity(Split::kTrain, params.per_train_identity);
  for (int i = 0; i < params.val_identities; ++i) make_identity(Split::kVal, params.per_train_identity);
  for (int i = 0; i < params.test_identities; ++i) make_identity(Split::kTest, params.per_test_identity);
  return corpus;
}

Corpus generate_corpus(int n_identities, int per_identity, Rng rng,
                       const ChannelSpec& spec) {
  if (n_identities < 3) throw RejectedInput("corpus: need at least 3 identities");
  CorpusParams p;
  p.test_identities = std::max(1, n_identities / 5);
  p.val_identities = std::max(1, n_identities / 5);
  p.train_identities = n_identities - p.val_identities - p.test_identities;
  p.per_train_identity = per_identity;
  p.per_test_identity = per_identity;
  return generate_corpus(p, rng, spec);
}

namespace {

json box_json(const FaceBox& b) {
  return json{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}};
}

FaceBox box_from_json(const json& j) {
  return FaceBox{j.at("x").get<int>(), j.at("y").get<int>(), j.at("w").get<int>(),
                 j.at("h").get<int>()};
}

}  // namespace

void save_corpus(const std::string& dir, const Corpus& corpus) {
  fs::create_directories(dir);
  json files = json::object();
  json rows = json::array();
  for (const auto& s : corpus.samples) {
    const std::string sub = to_string(s.split);
    fs::create_directories(fs::path(dir) / sub);
    const std::string base = sub + "/" + s.id;
    const std::string scene_p = base + "_scene.png";
    const std::string real_p = base + "_real.png";
    const std::string spoof_p = base + "_spoof.png";
    write_png(dir + "/" + scene_p, s.scene);
    write_png(dir + "/" + real_p, s.original);
    write_png(dir + "/" + spoof_p, s.spoofed);
    for (const auto& [path, role] :
         {std::pair{scene_p, "scene"}, {real_p, "real"}, {spoof_p, "spoofed"}}) {
      files[path] = json{{"identity", s.identity},
                         {"split", to_string(s.split)},
                         {"role", role},
                         {"box", box_json(s.box)},
                         {"sample", s.id}};
    }
    rows.push_back(json{{"id", s.id},
                        {"identity", s.identity},
                        {"split", to_string(s.split)},
                        {"box", box_json(s.box)},
                        {"scene", scene_p},
                        {"real", real_p},
                        {"spoofed", spoof_p}});
  }
  json manifest{{"version", 1},
                {"params",
                 {{"train_identities", corpus.params.train_identities},
                  {"val_identities", corpus.params.val_identities},
                  {"test_identities", corpus.params.test_identities},
                  {"per_train_identity", corpus.params.per_train_identity},
                  {"per_test_identity", corpus.params.per_test_identity},
                  {"scene_px", corpus.params.scene_px}}},
                {"samples", rows},
                {"files", files}};
  std::ofstream os(dir + "/manifest.json");
  os << manifest.dump(2) << "\n";
}

Corpus load_corpus(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw MissingArtifact("no corpus manifest in " + dir);
  json manifest = json::parse(is);
  Corpus corpus;
  const auto& p = manifest.at("params");
  corpus.params.train_identities = p.at("train_identities").get<int>();
  corpus.params.val_identities = p.at("val_identities").get<int>();
  corpus.params.test_identities = p.at("test_identities").get<int>();
  corpus.params.per_train_identity = p.at("per_train_identity").get<int>();
  corpus.params.per_test_identity = p.at("per_test_identity").get<int>();
  corpus.params.scene_px = p.at("scene_px").get<int>();
  for (const auto& row : manifest.at("samples")) {
    SpoofSample s;
    s.id = row.at("id").get<std::string>();
    s.identity = row.at("identity").get<std::string>();
    s.split = split_from_string(row.at("split").get<std::string>());
    s.box = box_from_json(row.at("box"));
    s.scene = read_png(dir + "/" + row.at("scene").get<std::string>());
    s.original = read_png(dir + "/" + row.at("real").get<std::string>());
    s.spoofed = read_png(dir + "/" + row.at("spoofed").get<std::string>());
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

FaceBox expanded_square_box(const FaceBox& box, int img_w, int img_h, double expand) {
  int side = static_cast<int>(std::lround(std::max(box.w, box.h) * (1.0 + expand)));
  side = std::min({side, img_w, img_h});
  int x = box.x + box.w / 2 - side / 2;
  int y = box.y + box.h / 2 - side / 2;
  x = std::clamp(x, 0, img_w - side);
  y = std::clamp(y, 0, img_h - side);
  return FaceBox{x, y, side, side};
}

namespace {

Image crop_box(const Image& img, const FaceBox& b) {
  return crop(img, b.x, b.y, b.w, b.h);
}

TransformParams geometry_only(const TransformParams& p) {
  TransformParams g = p;
  g.brightness = 1.0;
  g.contrast = 1.0;
  g.blur_sigma = 0.0;
  g.hue_shift = 0.0;
  g.sat_shift = 0.0;
  return g;
}

}  // namespace

LabeledCrops build_spoof_training_crops(const Corpus& corpus, Split split,
                                        const ChannelSpec& spec, Rng rng,
                                        bool augment, double crop_expand) {
  LabeledCrops out;
  for (int i : corpus.indices(split)) {
    const auto& s = corpus.samples[static_cast<size_t>(i)];
    const Image scene = dequantize(s.scene);
    const FaceBox ebox = expanded_square_box(s.box, s.scene.width, s.scene.height, crop_expand);
    const Image raw = dequantize(s.original);
    const Image expanded = crop_box(scene, ebox);
    Rng crng = rng.substream(std::string("crops/") + s.id);

    out.real.push_back(s.original);
    out.spoof.push_back(s.spoofed);
    if (augment) {
      // geometry-only jitter keeps warp artifacts class-neutral
      out.real.push_back(quantize(apply_transform(
          expanded, geometry_only(sample_transform(spec, crng)))));
      out.spoof.push_back(quantize(rebroadcast(expanded, spec, crng)));
    }
  }
  if (out.real.empty()) throw RejectedInput("build_spoof_training_crops: empty split");
  return out;
}

LabeledCrops build_spoof_eval_crops(const Corpus& corpus, Split split,
                                    const ChannelSpec& spec, Rng rng,
                                    double crop_expand) {
  LabeledCrops out;
  for (int i : corpus.indices(split)) {
    const auto& s = corpus.samples[static_cast<size_t>(i)];
    const Image scene = dequantize(s.scene);
    const FaceBox ebox = expanded_square_box(s.box, s.scene.width, s.scene.height, crop_expand);
    const Image expanded = crop_box(scene, ebox);
    Rng crng = rng.substream(std::string("eval_crops/") + s.id);
    out.real.push_back(quantize(expanded));
    out.spoof.push_back(quantize(rebroadcast(expanded, spec, crng)));
  }
  if (out.real.empty()) throw RejectedInput("build_spoof_eval_crops: empty split");
  return out;
}

}  // namespace respoof
