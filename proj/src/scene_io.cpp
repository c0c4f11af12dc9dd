#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>

#include <json.hpp>

#include "json_util.hpp"
#include "nlr/errors.hpp"
#include "nlr/parallel.hpp"
#include "nlr/scene.hpp"

namespace nlr {
namespace {

using nlohmann::json;

std::string view_label(std::size_t i) { return "view " + std::to_string(i); }

Mat4 matrix_from_json(const json& j, const std::string& what) { return json_util::matrix_from_json(j, "scene: " + what); }
using json_util::matrix_to_json;

std::string numbered(const char* prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03zu.png", prefix, i);
  return buf;
}

}  // namespace

void Scene::validate() const {
  if (views.empty()) throw EmptyScene("scene: no views");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    const int w = v.camera.width(), h = v.camera.height();
    if (v.image.width != w || v.image.height != h || v.image.channels != 3) {
      throw DimensionMismatch("scene: " + view_label(i) + " image is " + std::to_string(v.image.width) + "x" +
                              std::to_string(v.image.height) + ", camera expects " + std::to_string(w) + "x" +
                              std::to_string(h));
    }
    if (v.mask.size() != static_cast<std::size_t>(w) * h) {
      throw DimensionMismatch("scene: " + view_label(i) + " mask size differs from its image");
    }
  }
}

Scene load_scene(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / "scene.json" : path;
  const auto dir = file.parent_path();
  std::ifstream in(file);
  if (!in) throw MissingFile("scene: missing " + file.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("scene: " + file.string() + ": " + e.what());
  }
  if (!root.is_object() || !root.contains("views") || !root["views"].is_array()) {
    throw ParseError("scene: " + file.string() + " needs a views array");
  }
  const auto& jv = root["views"];
  if (jv.empty()) throw EmptyScene("scene: no views in " + file.string());

  struct Raw {
    Mat4 view, proj;
    int w, h;
    std::string image, mask;
  };
  std::vector<Raw> raw(jv.size());
  for (std::size_t i = 0; i < jv.size(); ++i) {
    const auto& v = jv[i];
    try {
      raw[i].view = matrix_from_json(v.at("view"), "view matrix");
      raw[i].proj = matrix_from_json(v.at("proj"), "proj matrix");
      raw[i].w = v.at("width").get<int>();
      raw[i].h = v.at("height").get<int>();
      raw[i].image = v.at("image").get<std::string>();
      raw[i].mask = v.at("mask").get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError("scene: " + view_label(i) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()) + " (" + view_label(i) + ")");
    }
  }

  std::vector<std::optional<View>> loaded(raw.size());
  parallel_for(raw.size(), [&](std::size_t i) {
    const auto& r = raw[i];
    std::optional<Camera> cam;
    try {
      cam.emplace(r.view, r.proj, r.w, r.h);
    } catch (const SingularMatrix& e) {
      throw SingularMatrix(std::string(e.what()) + " (" + view_label(i) + ")");
    } catch (const InvalidArgument& e) {
      throw ParseError(std::string(e.what()) + " (" + view_label(i) + ")");
    }
    Image img;
    std::vector<std::uint8_t> mask;
    int mw = 0, mh = 0;
    try {
      img = load_png(dir / r.image);
      mask = load_mask_png(dir / r.mask, mw, mh);
    } catch (const MissingFile& e) {
      throw MissingFile(std::string(e.what()) + " (" + view_label(i) + ")");
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()) + " (" + view_label(i) + ")");
    }
    if (img.channels == 4) {
      Image rgb(img.width, img.height, 3);
      for (std::size_t p = 0; p < static_cast<std::size_t>(img.width) * img.height; ++p)
        for (int c = 0; c < 3; ++c) rgb.data[p * 3 + c] = img.data[p * 4 + c];
      img = std::move(rgb);
    }
    if (mw != img.width || mh != img.height) {
      throw DimensionMismatch("scene: " + view_label(i) + " mask is " + std::to_string(mw) + "x" +
                              std::to_string(mh) + " but its image is " + std::to_string(img.width) + "x" +
                              std::to_string(img.height));
    }
    loaded[i].emplace(View{*cam, std::move(img), std::move(mask), r.image, r.mask});
  });

  Scene scene;
  scene.name = root.value("name", std::string("scene"));
  for (auto& v : loaded) scene.views.push_back(std::move(*v));
  scene.validate();
  return scene;
}

void write_scene(const Scene& scene, const std::filesystem::path& dir) {
  scene.validate();
  std::filesystem::create_directories(dir);
  json root;
  root["name"] = scene.name;
  root["views"] = json::array();
  for (std::size_t i = 0; i < scene.views.size(); ++i) {
    const auto& v = scene.views[i];
    const std::string img = v.image_file.empty() ? "images/" + numbered("view", i) : v.image_file;
    const std::string msk = v.mask_file.empty() ? "masks/" + numbered("mask", i) : v.mask_file;
    std::filesystem::create_directories((dir / img).parent_path());
    std::filesystem::create_directories((dir / msk).parent_path());
    write_png(dir / img, v.image);
    write_mask_png(dir / msk, v.mask, v.image.width, v.image.height);
    root["views"].push_back({{"image", img},
                             {"mask", msk},
                             {"view", matrix_to_json(v.camera.view())},
                             {"proj", matrix_to_json(v.camera.proj())},
                             {"width", v.camera.width()},
                             {"height", v.camera.height()}});
  }
  std::ofstream out(dir / "scene.json");
  if (!out) throw IoError("scene: cannot write " + (dir / "scene.json").string());
  out << root.dump(2) << "\n";
}

Scene select_views(const Scene& scene, const std::vector<int>& indices, bool exclude) {
  for (int i : indices) {
    if (i < 0 || i >= static_cast<int>(scene.views.size())) {
      throw InvalidArgument("scene: view index " + std::to_string(i) + " out of range");
    }
  }
  Scene out;
  out.name = scene.name;
  for (std::size_t i = 0; i < scene.views.size(); ++i) {
    const bool listed = std::find(indices.begin(), indices.end(), static_cast<int>(i)) != indices.end();
    if (listed != exclude) out.views.push_back(scene.views[i]);
  }
  if (out.views.empty()) throw EmptyScene("scene: view selection is empty");
  return out;
}

}  // namespace nlr
