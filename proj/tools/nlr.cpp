// nlr: synth, train, render, export, lumi-render, eval and bench.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nlr/config.hpp"
#include "nlr/errors.hpp"
#include "nlr/evaluate.hpp"
#include "nlr/exporter.hpp"
#include "nlr/lumigraph.hpp"
#include "nlr/neural_render.hpp"
#include "nlr/parallel.hpp"
#include "nlr/scene.hpp"
#include "nlr/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Raised for problems with the invocation itself (exit code 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string numbered(const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03zu.%s", prefix, i, ext);
  return buf;
}

// Options every pipeline subcommand shares.
struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  long long seed = -1;
  int threads = -1;

  void add(CLI::App* app, bool need_out = true) {
    app->add_option("-c,--config", config, "config file (key=value lines or JSON)");
    app->add_option("--set", sets, "override, key=value (repeatable)");
    auto* o = app->add_option("-o,--out", out, "output directory");
    if (need_out) o->required();
    app->add_option("--seed", seed, "random seed");
    app->add_option("--threads", threads, "worker threads (0 = all cores)");
  }

  nlr::RunConfig resolve() const {
    std::vector<std::string> layers = sets;
    if (seed >= 0) layers.push_back("seed=" + std::to_string(seed));
    if (threads >= 0) layers.push_back("threads=" + std::to_string(threads));
    nlr::RunConfig cfg;
    try {
      const fs::path p(config);
      cfg = nlr::resolve_config(config.empty() ? nullptr : &p, layers);
    } catch (const nlr::InvalidArgument& e) {
      throw UsageError(e.what());
    } catch (const nlr::ParseError& e) {
      throw UsageError(e.what());
    } catch (const nlr::MissingFile& e) {
      throw UsageError(e.what());
    }
    nlr::set_thread_count(cfg.threads);
    return cfg;
  }
};

std::vector<int> parse_index_list(const std::string& s) {
  std::vector<int> out;
  if (s.empty()) return out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const auto tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("bad index list '" + s + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void write_frame(const fs::path& dir, std::size_t i, const nlr::Image& rgba) { nlr::write_png(dir / numbered("frame", i, "png"), rgba); }

// Cameras from a camera path file, with intrinsics from a reference camera.
std::vector<nlr::Camera> path_cameras(const std::string& file, const nlr::Camera& ref, int width, int height) {
  std::vector<nlr::Camera> cams;
  const int w = width > 0 ? width : ref.width(), h = height > 0 ? height : ref.height();
  for (const auto& V : nlr::load_camera_path(file)) cams.emplace_back(V, ref.proj(), w, h);
  return cams;
}

nlr::Camera resized(const nlr::Camera& c, int width, int height) {
  if (width <= 0 && height <= 0) return c;
  return nlr::Camera(c.view(), c.proj(), width > 0 ? width : c.width(), height > 0 ? height : c.height());
}

std::vector<std::string> g_argv;

// ---- synth ----
struct SynthArgs {
  std::string out, shape = "sphere", layout = "ring";
  int views = 16, size = 64;
  double distance = 2.5, fovy = 35, specular = 0.5;
  unsigned long long seed = 1;
};

int run_synth(const SynthArgs& a) {
  nlr::SynthSpec spec;
  try {
    spec.shape.kind = nlr::parse_shape_kind(a.shape);
    spec.layout = nlr::parse_layout(a.layout);
  } catch (const nlr::InvalidArgument& e) {
    throw UsageError(e.what());
  }
  spec.views = a.views;
  spec.width = spec.height = a.size;
  spec.distance = a.distance;
  spec.fovy_deg = a.fovy;
  spec.specular = a.specular;
  spec.seed = a.seed;
  const auto s = nlr::generate_synthetic(spec);
  nlr::write_scene(s.scene, a.out);
  nlr::write_manifest(a.out, nlr::RunConfig{}, g_argv,
                      {{"shape", a.shape}, {"layout", a.layout}, {"views", a.views}, {"size", a.size},
                       {"distance", a.distance}, {"fovy_deg", a.fovy}, {"specular", a.specular}, {"seed", a.seed}});
  std::cout << "wrote " << s.scene.views.size() << " views to " << a.out << "\n";
  return 0;
}

// ---- train ----
struct TrainArgs {
  Common common;
  std::string scene, holdout, resume;
};

int run_train(const TrainArgs& a) {
  const auto cfg = a.common.resolve();
  nlr::Scene scene = nlr::load_scene(a.scene);
  if (!a.holdout.empty()) scene = nlr::select_views(scene, parse_index_list(a.holdout), true);
  nlr::write_manifest(a.common.out, cfg, g_argv, {{"scene", a.scene}, {"holdout", a.holdout}});
  nlr::TrainOutputs outs;
  outs.dir = a.common.out;
  if (!a.resume.empty()) {
    const fs::path r(a.resume);
    if (fs::is_directory(r)) {
      outs.resume_checkpoint = r / "model.nlrc";
      outs.resume_optimizer = r / "optim.bin";
    } else {
      outs.resume_checkpoint = r;
      auto opt = r;
      auto name = r.filename().string();
      if (name.rfind("ckpt_", 0) == 0) {
        opt.replace_filename("optim_" + name.substr(5, name.size() - 5 - 5) + ".bin");
      } else {
        opt.replace_filename("optim.bin");
      }
      outs.resume_optimizer = opt;
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  const int every = std::max(1, cfg.train.total_batches / 20);
  outs.on_batch = [&](std::int64_t b, const nlr::LossTerms& t) {
    if ((b + 1) % every == 0 || b + 1 == cfg.train.total_batches) {
      std::printf("batch %lld  L_R %.5f  L_E %.5f  L_M %.6f  L_S %.4f  total %.5f  %.1fs\n",
                  static_cast<long long>(b + 1), t.L_R, t.L_E, t.L_M, t.L_S, t.total, seconds_since(t0));
      std::fflush(stdout);
    }
  };
  const auto res = nlr::train(scene, cfg.train, outs);
  std::cout << "checkpoint " << res.final_checkpoint.string() << " (" << res.batches_run << " batches, "
            << seconds_since(t0) << " s)\n";
  return 0;
}

// ---- render ----
struct RenderArgs {
  Common common;
  std::string checkpoint, scene, views, camera_path;
  int width = 0, height = 0;
};

int run_render(const RenderArgs& a) {
  const auto cfg = a.common.resolve();
  const auto model = nlr::load_checkpoint(a.checkpoint);
  const auto scene = nlr::load_scene(a.scene);
  std::vector<nlr::Camera> cams;
  if (!a.camera_path.empty()) {
    cams = path_cameras(a.camera_path, scene.views.front().camera, a.width, a.height);
  } else {
    const auto idx = a.views.empty() ? std::vector<int>{} : parse_index_list(a.views);
    const auto sel = idx.empty() ? scene : nlr::select_views(scene, idx, false);
    for (const auto& v : sel.views) cams.push_back(resized(v.camera, a.width, a.height));
  }
  fs::create_directories(a.common.out);
  nlr::write_manifest(a.common.out, cfg, g_argv, {{"checkpoint", a.checkpoint}, {"scene", a.scene}});
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto f = nlr::render_neural(model, cams[i], cfg.train.trace);
    write_frame(a.common.out, i, f.rgba);
    nlr::write_pfm(fs::path(a.common.out) / numbered("depth", i, "pfm"), f.depth);
    std::printf("frame %zu: %.2f s\n", i, seconds_since(t0));
  }
  return 0;
}

// ---- export ----
struct ExportArgs {
  Common common;
  std::string checkpoint, scene, base_views;
  int tex_size = 128, cols = 3, rows = 2;
  double distance = 2.5, fovy = 35, spacing = 20;
};

std::vector<nlr::Camera> base_cameras(const ExportArgs& a) {
  if (!a.scene.empty()) {
    const auto scene = nlr::load_scene(a.scene);
    const auto idx = parse_index_list(a.base_views);
    const auto sel = idx.empty() ? scene : nlr::select_views(scene, idx, false);
    std::vector<nlr::Camera> cams;
    for (const auto& v : sel.views) cams.push_back(resized(v.camera, a.tex_size, a.tex_size));
    return cams;
  }
  nlr::SynthSpec spec;
  spec.layout = nlr::CameraLayout::Grid;
  spec.width = spec.height = a.tex_size;
  spec.distance = a.distance;
  spec.fovy_deg = a.fovy;
  spec.grid_spacing_deg = a.spacing;
  return nlr::synthetic_cameras(spec);
}

int run_export(const ExportArgs& a) {
  const auto cfg = a.common.resolve();
  const auto model = nlr::load_checkpoint(a.checkpoint);
  const auto base = base_cameras(a);
  nlr::ExportOptions eo;
  eo.mc = cfg.mc;
  eo.texture_level = cfg.texture_level;
  eo.trace = cfg.train.trace;
  eo.grid_cols = a.cols;
  eo.grid_rows = a.rows;
  const auto t0 = std::chrono::steady_clock::now();
  const auto b = nlr::export_bundle(model, base, eo);
  nlr::write_bundle(b, a.common.out);
  nlr::write_manifest(a.common.out, cfg, g_argv, {{"checkpoint", a.checkpoint}, {"tex_size", a.tex_size}});
  std::printf("mesh: %zu vertices, %zu triangles; %zu textures (%.1f s)\n", b.mesh.vertices.size(),
              b.mesh.triangles.size(), b.size(), seconds_since(t0));
  return 0;
}

// ---- lumi-render ----
struct LumiArgs {
  Common common;
  std::string bundle, camera_path, scene, views, mode = "lumigraph";
  int width = 0, height = 0;
  bool debug = false;
};

nlr::LumigraphOptions lumi_options(const nlr::RunConfig& cfg, const std::string& mode, bool debug) {
  auto o = cfg.lumigraph;
  if (mode == "lumigraph") {
    o.mode = nlr::BlendMode::Lumigraph;
  } else if (mode == "single") {
    o.mode = nlr::BlendMode::NearestSingle;
  } else {
    throw UsageError("--mode must be lumigraph or single");
  }
  o.debug = debug;
  return o;
}

int run_lumi(const LumiArgs& a) {
  const auto cfg = a.common.resolve();
  const auto opts = lumi_options(cfg, a.mode, a.debug);
  const auto bundle = nlr::read_bundle(a.bundle);
  std::vector<nlr::Camera> cams;
  if (!a.camera_path.empty()) {
    cams = path_cameras(a.camera_path, bundle.cameras.front(), a.width, a.height);
  } else if (!a.scene.empty()) {
    const auto scene = nlr::load_scene(a.scene);
    const auto idx = parse_index_list(a.views);
    const auto sel = idx.empty() ? scene : nlr::select_views(scene, idx, false);
    for (const auto& v : sel.views) cams.push_back(resized(v.camera, a.width, a.height));
  } else {
    throw UsageError("lumi-render needs --camera-path or --scene");
  }
  fs::create_directories(a.common.out);
  nlr::write_manifest(a.common.out, cfg, g_argv, {{"bundle", a.bundle}, {"mode", a.mode}});
  for (std::size_t i = 0; i < cams.size(); ++i) write_frame(a.common.out, i, nlr::render_view(bundle, cams[i], opts));
  std::printf("rendered %zu frames\n", cams.size());
  return 0;
}

// ---- eval ----
struct EvalArgs {
  Common common;
  std::string scene, views, checkpoint, bundle, mode = "lumigraph";
  double gt_radius = -1;
  int gt_samples = 10000;
};

int run_eval(const EvalArgs& a) {
  const auto cfg = a.common.resolve();
  if (a.checkpoint.empty() == a.bundle.empty()) throw UsageError("eval needs exactly one of --checkpoint or --bundle");
  const auto scene = nlr::load_scene(a.scene);
  const auto idx = parse_index_list(a.views);
  const auto sel = idx.empty() ? scene : nlr::select_views(scene, idx, false);
  nlr::EvalReport rep;
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<nlr::FieldModel<float>> model;
  std::optional<nlr::ExportBundle> bundle;
  if (!a.checkpoint.empty()) model = nlr::load_checkpoint(a.checkpoint);
  if (!a.bundle.empty()) bundle = nlr::read_bundle(a.bundle);
  rep.seconds["load"] = seconds_since(t0);
  const auto t1 = std::chrono::steady_clock::now();
  for (const auto& v : sel.views) {
    const nlr::Image pred = model ? nlr::render_neural(*model, v.camera, cfg.train.trace).rgba
                                  : nlr::render_view(*bundle, v.camera, lumi_options(cfg, a.mode, false));
    rep.psnr.push_back(nlr::masked_psnr(pred, v.image, v.mask));
  }
  rep.seconds["render"] = seconds_since(t1);
  if (a.gt_radius > 0) {
    const auto t2 = std::chrono::steady_clock::now();
    nlr::Mesh mesh;
    if (bundle) {
      mesh = bundle->mesh;
    } else {
      const nlr::NeuralSdf sdf(model->sdf);
      mesh = nlr::marching_cubes(sdf, cfg.mc);
    }
    rep.chamfer = nlr::chamfer_one_directional(nlr::sample_sphere(a.gt_samples, a.gt_radius, cfg.train.seed), mesh);
    rep.seconds["chamfer"] = seconds_since(t2);
  }
  rep.finalize();
  fs::create_directories(a.common.out);
  nlr::write_eval_report(fs::path(a.common.out) / "eval_report.json", rep);
  nlr::write_manifest(a.common.out, cfg, g_argv, {{"scene", a.scene}, {"views", a.views}});
  std::printf("mean masked PSNR %.3f dB over %zu views", rep.mean_psnr, rep.psnr.size());
  if (rep.chamfer) std::printf(", chamfer %.5f", *rep.chamfer);
  std::printf("\n");
  return 0;
}

// ---- bench ----
struct BenchArgs {
  Common common;
  std::string checkpoint, bundle;
  int neural_size = 128, lumi_size = 512, frames = 10;
};

// Analytic sphere bundle: marching-cubes mesh and ground-truth textures at
// the 15 level-2 grid poses.
nlr::ExportBundle sphere_bundle(int tex_size, int mc_res) {
  nlr::SynthSpec spec;
  spec.layout = nlr::CameraLayout::Grid;
  spec.width = spec.height = tex_size;
  const nlr::SyntheticRenderer r(spec);
  nlr::ExportBundle b;
  nlr::MarchingCubesOptions mc;
  mc.resolution = mc_res;
  b.mesh = nlr::marching_cubes(r.sdf(), mc);
  b.cameras = nlr::generate_texture_cameras(nlr::synthetic_cameras(spec), 2);
  auto baked = nlr::bake_synthetic(r, b.cameras);
  b.textures = std::move(baked.textures);
  b.depths = std::move(baked.depths);
  return b;
}

int run_bench(const BenchArgs& a) {
  const auto cfg = a.common.resolve();
  fs::create_directories(a.common.out);
  // Model: the given checkpoint, else freshly initialized nets of the configured size.
  const auto model = a.checkpoint.empty() ? nlr::make_fields(cfg.train.fields, cfg.train.seed)
                                          : nlr::load_checkpoint(a.checkpoint);
  const double mb = static_cast<double>(nlr::serialize_checkpoint(model).size()) / 1e6;

  nlr::SynthSpec spec;
  spec.width = spec.height = a.neural_size;
  const auto cam = nlr::orbit_camera(spec, 10, 5);
  const auto t0 = std::chrono::steady_clock::now();
  (void)nlr::render_neural(model, cam, cfg.train.trace);
  const double neural_s = seconds_since(t0);

  const auto bundle = a.bundle.empty() ? sphere_bundle(128, 256) : nlr::read_bundle(a.bundle);
  nlr::SynthSpec ls;
  ls.width = ls.height = a.lumi_size;
  const auto lcam = nlr::orbit_camera(ls, 7, 3);
  (void)nlr::render_view(bundle, lcam, cfg.lumigraph);  // warm-up
  const auto t1 = std::chrono::steady_clock::now();
  for (int i = 0; i < a.frames; ++i) (void)nlr::render_view(bundle, lcam, cfg.lumigraph);
  const double per_frame = seconds_since(t1) / a.frames;

  ordered_json j{{"threads", nlr::thread_count()},
                 {"neural_render_seconds_per_frame", neural_s},
                 {"neural_render_size", a.neural_size},
                 {"lumigraph_fps", 1.0 / per_frame},
                 {"lumigraph_size", a.lumi_size},
                 {"lumigraph_textures", bundle.size()},
                 {"mesh_triangles", bundle.mesh.triangles.size()},
                 {"checkpoint_mb", mb},
                 {"parameters", model.parameter_count()}};
  std::ofstream(fs::path(a.common.out) / "bench.json") << j.dump(2) << '\n';
  nlr::write_manifest(a.common.out, cfg, g_argv, {{"checkpoint", a.checkpoint}, {"bundle", a.bundle}});
  std::printf("neural render: %.3f s/frame at %dx%d\n", neural_s, a.neural_size, a.neural_size);
  std::printf("lumigraph: %.1f fps at %dx%d with %zu textures (%d threads)\n", 1.0 / per_frame, a.lumi_size,
              a.lumi_size, bundle.size(), nlr::thread_count());
  std::printf("checkpoint size: %.2f MB (%zu parameters)\n", mb, model.parameter_count());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  g_argv.assign(argv, argv + argc);
  CLI::App app{"Neural lumigraph pipeline"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic multi-view scene");
  synth->add_option("-o,--out", sa.out, "scene directory")->required();
  synth->add_option("--shape", sa.shape, "sphere, torus or box");
  synth->add_option("--layout", sa.layout, "ring or grid");
  synth->add_option("--views", sa.views, "ring camera count");
  synth->add_option("--size", sa.size, "image width and height");
  synth->add_option("--distance", sa.distance, "camera distance");
  synth->add_option("--fovy", sa.fovy, "vertical field of view, degrees");
  synth->add_option("--specular", sa.specular, "specular strength");
  synth->add_option("--seed", sa.seed, "albedo seed");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "fit the SDF and radiance networks to a scene");
  ta.common.add(train);
  train->add_option("--scene", ta.scene, "scene directory")->required();
  train->add_option("--holdout", ta.holdout, "comma-separated view indices to leave out");
  train->add_option("--resume", ta.resume, "checkpoint file or run directory to continue from");

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "sphere-traced neural render");
  ra.common.add(render);
  render->add_option("--checkpoint", ra.checkpoint, "model checkpoint (.nlrc)")->required();
  render->add_option("--scene", ra.scene, "scene providing cameras")->required();
  render->add_option("--views", ra.views, "comma-separated view indices");
  render->add_option("--camera-path", ra.camera_path, "JSON list of view matrices");
  render->add_option("--width", ra.width, "frame width (default: camera width)");
  render->add_option("--height", ra.height, "frame height (default: camera height)");

  ExportArgs ea;
  auto* exp = app.add_subcommand("export", "marching-cubes mesh and baked projective textures");
  ea.common.add(exp);
  exp->add_option("--checkpoint", ea.checkpoint, "model checkpoint (.nlrc)")->required();
  exp->add_option("--scene", ea.scene, "take base texture cameras from this scene");
  exp->add_option("--base-views", ea.base_views, "comma-separated base view indices");
  exp->add_option("--grid-cols", ea.cols, "base grid columns");
  exp->add_option("--grid-rows", ea.rows, "base grid rows");
  exp->add_option("--tex-size", ea.tex_size, "texture width and height");
  exp->add_option("--distance", ea.distance, "grid camera distance");
  exp->add_option("--fovy", ea.fovy, "grid camera field of view, degrees");
  exp->add_option("--spacing", ea.spacing, "grid spacing, degrees");

  LumiArgs la;
  auto* lumi = app.add_subcommand("lumi-render", "lumigraph render of an exported bundle");
  la.common.add(lumi);
  lumi->add_option("--bundle", la.bundle, "exported bundle directory")->required();
  lumi->add_option("--camera-path", la.camera_path, "JSON list of view matrices");
  lumi->add_option("--scene", la.scene, "scene providing cameras");
  lumi->add_option("--views", la.views, "comma-separated view indices");
  lumi->add_option("--width", la.width, "frame width");
  lumi->add_option("--height", la.height, "frame height");
  lumi->add_option("--mode", la.mode, "lumigraph or single");
  lumi->add_flag("--debug", la.debug, "paint unresolved pixels magenta");

  EvalArgs va;
  auto* eval = app.add_subcommand("eval", "masked PSNR and Chamfer distance");
  va.common.add(eval);
  eval->add_option("--scene", va.scene, "ground-truth scene")->required();
  eval->add_option("--views", va.views, "comma-separated view indices");
  eval->add_option("--checkpoint", va.checkpoint, "evaluate neural renders");
  eval->add_option("--bundle", va.bundle, "evaluate lumigraph renders");
  eval->add_option("--mode", va.mode, "lumigraph or single (with --bundle)");
  eval->add_option("--gt-sphere-radius", va.gt_radius, "Chamfer against this analytic sphere");
  eval->add_option("--gt-samples", va.gt_samples, "surface samples for Chamfer");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "render time, lumigraph fps and model size");
  ba.common.add(bench);
  bench->add_option("--checkpoint", ba.checkpoint, "model to time (default: untrained nets of the configured size)");
  bench->add_option("--bundle", ba.bundle, "bundle to time (default: analytic sphere, 15 textures)");
  bench->add_option("--neural-size", ba.neural_size, "neural frame size");
  bench->add_option("--lumi-size", ba.lumi_size, "lumigraph frame size");
  bench->add_option("--frames", ba.frames, "lumigraph frames to time");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*train) return run_train(ta);
    if (*render) return run_render(ra);
    if (*exp) return run_export(ea);
    if (*lumi) return run_lumi(la);
    if (*eval) return run_eval(va);
    if (*bench) return run_bench(ba);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
