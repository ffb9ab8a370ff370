#include "cli.hpp"

#include "s2w/bench.hpp"
#include "s2w/checkpoint.hpp"
#include "s2w/dataset.hpp"
#include "s2w/io.hpp"
#include "s2w/metrics.hpp"
#include "s2w/network.hpp"
#include "s2w/ops.hpp"
#include "s2w/train.hpp"
#include "s2w/wavelet.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

namespace s2w::cli
{

namespace
{
namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

class UsageError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

std::uint64_t default_seed(std::uint64_t fallback)
{
  const char* text = std::getenv("S2W_SEED");
  if (!text)
    return fallback;
  std::uint64_t value = 0;
  const char* end = text + std::char_traits<char>::length(text);
  const auto [ptr, ec] = std::from_chars(text, end, value);
  if (ec != std::errc() || ptr != end || ptr == text)
    throw UsageError("S2W_SEED must be an unsigned integer, got '" + std::string(text) + "'");
  return value;
}

std::string shape_text(const Tensor& t)
{
  std::string s;
  for (std::size_t i = 0; i < t.rank(); ++i)
    s += (i ? "x" : "") + std::to_string(t.dim(i));
  return s;
}

// One JSON record per run: what was asked, with which seed, how long it took
// and what it wrote.
struct Manifest
{
  explicit Manifest(std::string name) : command(std::move(name)) {}

  std::string command;
  Json config = Json::object();
  std::optional<std::uint64_t> seed;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const fs::path& path) const
  {
    Json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed ? Json(*seed) : Json(nullptr);
    j["timings"] = {
      {"total_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
    j["outputs"] = outputs;
    std::ofstream os(path);
    os << j.dump(2) << '\n';
    if (!os)
      throw FormatError("cannot write manifest " + path.string());
  }
};

fs::path sibling_manifest(const fs::path& output)
{
  return fs::path(output.string() + ".manifest.json");
}

void write_manifest_if(const std::string& path, const Manifest& m)
{
  if (!path.empty())
    m.write(path);
}

std::size_t ratio_between(const Tensor& fine, const Tensor& coarse, const char* what)
{
  if (fine.rank() != 3 || coarse.rank() != 3 || coarse.dim(1) == 0 || coarse.dim(2) == 0 ||
      fine.dim(1) % coarse.dim(1) || fine.dim(1) / coarse.dim(1) * coarse.dim(2) != fine.dim(2))
    throw ShapeError(std::string(what) + ": " + shape_text(fine) + " and " + shape_text(coarse) +
                     " are not related by an integer ratio");
  return fine.dim(1) / coarse.dim(1);
}

// gen

struct GenOptions
{
  std::size_t bands = 8, size = 64, count = 64, ratio = 4;
  std::uint64_t seed = 7;
  std::string out;
};

int cmd_gen(const GenOptions& o, std::ostream& out)
{
  if (o.size % o.ratio)
    throw UsageError("--size must be divisible by --ratio");
  Manifest m("gen");
  m.seed = o.seed;
  m.config = {{"bands", o.bands}, {"size", o.size}, {"count", o.count}, {"ratio", o.ratio}};
  fs::create_directories(o.out);
  const SceneSpec spec{o.bands, o.size, o.size, o.count, o.seed};
  for (std::size_t i = 0; i < o.count; ++i) {
    save_triplet(o.out, i, wald_degrade(generate_scene(spec, i), o.ratio));
    for (const char* kind : {"gt", "lrms", "pan"})
      m.outputs.push_back(triplet_path(o.out, i, kind).string());
  }
  m.write(fs::path(o.out) / "manifest.json");
  out << "wrote " << o.count << " triplets (" << o.bands << "x" << o.size << "x" << o.size << ", ratio "
      << o.ratio << ") to " << o.out << '\n';
  return kOk;
}

// train

struct TrainOptions
{
  std::string data, val, ckpt, ablation = "full", history;
  std::size_t steps = 200, batch = 4, patch = 16, width = 32, validate_every = 50;
  double lr = 4e-4;
  std::uint64_t seed = 0;
};

std::string history_row(const TrainRecord& r)
{
  std::ostringstream os;
  os << std::setw(6) << r.step << "  " << std::fixed << std::setprecision(6) << std::setw(10) << r.loss << "  "
     << std::scientific << std::setprecision(2) << r.lr << "  ";
  if (r.val_psnr)
    os << std::fixed << std::setprecision(3) << std::setw(8) << *r.val_psnr;
  else
    os << std::setw(8) << "-";
  return os.str();
}

int cmd_train(const TrainOptions& o, std::ostream& out)
{
  ModelConfig mc;
  mc.width = o.width;
  mc.ablation = AblationConfig::parse(o.ablation);
  const std::vector<Triplet> data = load_split(o.data);
  const std::vector<Triplet> val = o.val.empty() ? std::vector<Triplet>{} : load_split(o.val);
  mc.ratio = ratio_between(data[0].gt, data[0].lrms, "train");
  mc.bands = data[0].gt.dim(0);
  S2WMambaModel model = build_model(mc, o.seed);

  TrainConfig tc;
  tc.learning_rate = o.lr;
  tc.steps = o.steps;
  tc.batch = o.batch;
  tc.patch = o.patch;
  tc.validate_every = o.validate_every;
  tc.seed = o.seed;
  tc.checkpoint = o.ckpt;

  Manifest m("train");
  m.seed = o.seed;
  m.config = {{"data", o.data},   {"val", o.val},         {"steps", o.steps},
              {"batch", o.batch}, {"patch", o.patch},     {"lr", o.lr},
              {"width", o.width}, {"ablation", mc.ablation.name()}, {"ratio", mc.ratio},
              {"bands", mc.bands}, {"parameters", model.parameter_count()}};

  std::ostringstream table;
  const std::string header = "  step        loss        lr  val_psnr";
  table << header << '\n';
  out << header << '\n';
  train_toy(model, data, val, tc, [&](const TrainRecord& r) {
    const std::string row = history_row(r);
    table << row << '\n';
    out << row << '\n' << std::flush;
  });
  m.outputs.push_back(o.ckpt);
  if (!o.history.empty()) {
    std::ofstream hs(o.history);
    hs << table.str();
    if (!hs)
      throw FormatError("cannot write " + o.history);
    m.outputs.push_back(o.history);
  }
  m.write(sibling_manifest(o.ckpt));
  out << "checkpoint " << o.ckpt << " (" << mc.ablation.name() << ", " << model.parameter_count()
      << " parameters)\n";
  return kOk;
}

// fuse

struct FuseOptions
{
  std::string ckpt, pan, lrms, out;
};

int cmd_fuse(const FuseOptions& o, std::ostream& out)
{
  const S2WMambaModel model = load_checkpoint(fs::path(o.ckpt));
  const Tensor pan = read_image(fs::path(o.pan)), lrms = read_image(fs::path(o.lrms));
  Manifest m("fuse");
  m.config = {{"ckpt", o.ckpt}, {"pan", o.pan}, {"lrms", o.lrms}, {"variant", model.config.ablation.name()}};
  Tensor fused;
  {
    NoGradGuard guard;
    fused = forward(model, pan, lrms);
  }
  write_image(fs::path(o.out), fused);
  m.outputs.push_back(o.out);
  m.write(sibling_manifest(o.out));
  out << "wrote " << o.out << " (" << shape_text(fused) << ")\n";
  return kOk;
}

// eval

struct EvalOptions
{
  std::string pred, gt, fused, lrms, pan, table, manifest;
  std::size_t ratio = 4;
  double peak = 1.0;
};

Json report_json(const MetricsReport& r)
{
  Json j = Json::object();
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v)
      j[key] = std::isinf(*v) ? Json("inf") : Json(*v);
  };
  put("psnr", r.psnr);
  put("sam", r.sam);
  put("ergas", r.ergas);
  put("q2n", r.q2n);
  put("d_lambda", r.d_lambda);
  put("d_s", r.d_s);
  put("hqnr", r.hqnr);
  return j;
}

int cmd_eval(const EvalOptions& o, std::ostream& out)
{
  const bool reduced = !o.pred.empty();
  if (reduced == !o.fused.empty())
    throw UsageError("eval needs either --pred/--gt or --fused/--lrms/--pan");
  Manifest m("eval");
  MetricsReport report;
  if (reduced) {
    m.config = {{"mode", "reduced"}, {"pred", o.pred}, {"gt", o.gt}, {"ratio", o.ratio}, {"peak", o.peak}};
    report = reduced_resolution_report(read_image(fs::path(o.pred)), read_image(fs::path(o.gt)), o.ratio, o.peak);
  } else {
    m.config = {{"mode", "full"}, {"fused", o.fused}, {"lrms", o.lrms}, {"pan", o.pan}};
    const Tensor fused = read_image(fs::path(o.fused)), lrms = read_image(fs::path(o.lrms));
    const Tensor pan = read_image(fs::path(o.pan));
    const std::size_t r = ratio_between(fused, lrms, "eval");
    report = full_resolution_report(fused, lrms, pan, blur_decimate(pan, r));
  }
  out << format_report(report);
  if (!o.table.empty()) {
    std::ofstream ts(o.table);
    ts << Json{{"mode", reduced ? "reduced" : "full"}, {"metrics", report_json(report)}}.dump(2) << '\n';
    if (!ts)
      throw FormatError("cannot write " + o.table);
    m.outputs.push_back(o.table);
  }
  write_manifest_if(o.manifest, m);
  return kOk;
}

// bench

struct BenchOptions
{
  std::string op = "scan", manifest;
  std::vector<std::size_t> sizes{1024, 4096, 16384};
  std::size_t repeats = 5, channels = 16, state = 8;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchOptions& o, std::ostream& out)
{
  Manifest m("bench");
  m.seed = o.seed;
  m.config = {{"op", o.op}, {"sizes", o.sizes}, {"repeats", o.repeats}, {"channels", o.channels}};
  if (o.op == "scan")
    m.config["state"] = o.state;
  std::vector<BenchPoint> points;
  for (std::size_t n : o.sizes)
    points.push_back(o.op == "scan" ? bench_scan(n, o.channels, o.state, o.repeats, o.seed)
                                    : bench_dwt(n, o.channels, o.repeats, o.seed));
  const auto ratios = growth_ratios(points);
  out << "op=" << o.op << " channels=" << o.channels;
  if (o.op == "scan")
    out << " state=" << o.state;
  out << " repeats=" << o.repeats << '\n';
  out << "      size   median_ms   growth   peak_kib  mem_growth\n";
  Json rows = Json::array();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    out << std::setw(10) << p.size << std::fixed << std::setprecision(3) << std::setw(12)
        << p.median_seconds * 1e3;
    if (i)
      out << std::setprecision(2) << std::setw(9) << ratios[i - 1];
    else
      out << std::setw(9) << "-";
    out << std::setprecision(1) << std::setw(11) << double(p.peak_bytes) / 1024.0;
    if (i)
      out << std::setprecision(2) << std::setw(12) << double(p.peak_bytes) / double(points[i - 1].peak_bytes);
    else
      out << std::setw(12) << "-";
    out << '\n';
    rows.push_back({{"size", p.size}, {"median_seconds", p.median_seconds}, {"peak_bytes", p.peak_bytes}});
  }
  m.config["results"] = rows;
  write_manifest_if(o.manifest, m);
  return kOk;
}

// dwt

struct DwtOptions
{
  std::string mode = "2d", in, out, manifest;
  bool roundtrip = false;
};

double max_abs(const Tensor& t)
{
  double m = 0.0;
  for (double v : t.data())
    m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

Tensor through_file_format(const Tensor& t)
{
  std::stringstream buffer(std::ios::in | std::ios::out | std::ios::binary);
  write_image(buffer, t);
  return read_image(buffer);
}

int cmd_dwt(const DwtOptions& o, std::ostream& out)
{
  const Tensor x = read_image(fs::path(o.in));
  const bool two_d = o.mode == "2d";
  Manifest m("dwt");
  m.config = {{"mode", o.mode}, {"in", o.in}, {"roundtrip", o.roundtrip}};
  NoGradGuard guard;
  const Tensor stacked = two_d ? dwt2d_stacked(x) : dwt1d_stacked(x);
  auto inverse = [&](const Tensor& s) { return two_d ? idwt2d_stacked(s) : idwt1d_stacked(s); };

  out << "mode=" << o.mode << " input=" << shape_text(x) << " coefficients=" << shape_text(stacked) << '\n';
  if (o.roundtrip) {
    // Coefficients stored as 32-bit file values, as a file-based pipeline would.
    out << std::scientific << std::setprecision(3);
    out << "max_error=" << max_abs_diff(inverse(through_file_format(stacked)), x) << '\n';
    out << "max_error_f64=" << max_abs_diff(inverse(stacked), x) << '\n';
  } else {
    const std::size_t parts = two_d ? 4 : 2;
    const char* names2d[] = {"LL", "LH", "HL", "HH"};
    const char* names1d[] = {"L", "H"};
    const std::size_t per = stacked.dim(0) / parts;
    out << std::setprecision(6);
    for (std::size_t k = 0; k < parts; ++k)
      out << (two_d ? names2d[k] : names1d[k]) << "_max_abs=" << max_abs(slice_channels(stacked, k * per, per))
          << '\n';
  }
  if (!o.out.empty()) {
    write_image(fs::path(o.out), stacked);
    m.outputs.push_back(o.out);
  }
  write_manifest_if(o.manifest, m);
  return kOk;
}

// preview

struct PreviewOptions
{
  std::string in, out, manifest;
  std::size_t band = 0;
  double lo = 0.0, hi = 1.0;
};

int cmd_preview(const PreviewOptions& o, std::ostream& out)
{
  if (!(o.hi > o.lo))
    throw UsageError("--hi must exceed --lo");
  const Tensor img = read_image(fs::path(o.in));
  if (o.band >= img.dim(0))
    throw UsageError("--band " + std::to_string(o.band) + " out of range for " + shape_text(img));
  write_pgm(o.out, img, o.band, o.lo, o.hi);
  Manifest m("preview");
  m.config = {{"in", o.in}, {"band", o.band}, {"lo", o.lo}, {"hi", o.hi}};
  m.outputs.push_back(o.out);
  write_manifest_if(o.manifest, m);
  out << "wrote " << o.out << " (band " << o.band << ", " << img.dim(1) << "x" << img.dim(2) << ")\n";
  return kOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
  CLI::App app{"S2WMamba pansharpening toolkit", "s2w"};
  app.require_subcommand(1);

  GenOptions gen;
  gen.seed = default_seed(7);
  auto* g = app.add_subcommand("gen", "Generate a synthetic triplet dataset");
  g->add_option("--bands", gen.bands, "Spectral bands")->capture_default_str()->check(CLI::Range(1, 256));
  g->add_option("--size", gen.size, "GT / PAN side length")->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--count", gen.count, "Number of triplets")->capture_default_str();
  g->add_option("--ratio", gen.ratio, "Resolution ratio")->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Scene seed (default: S2W_SEED or 7)")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->required();

  TrainOptions train;
  train.seed = default_seed(0);
  auto* t = app.add_subcommand("train", "Train on a generated dataset");
  t->add_option("--data", train.data, "Training split directory")->required();
  t->add_option("--val", train.val, "Held-out split directory");
  t->add_option("--steps", train.steps, "Optimizer steps")->capture_default_str();
  t->add_option("--batch", train.batch, "Samples per step")->capture_default_str();
  t->add_option("--patch", train.patch, "GT crop size, 0 for whole images")->capture_default_str();
  t->add_option("--lr", train.lr, "Initial learning rate")->capture_default_str();
  t->add_option("--width", train.width, "Feature width C")->capture_default_str();
  t->add_option("--validate-every", train.validate_every, "Validation interval")->capture_default_str();
  t->add_option("--ablation", train.ablation, "Variant, e.g. CRM or no_Gm+no_Ga")->capture_default_str();
  t->add_option("--ckpt", train.ckpt, "Checkpoint to write")->required();
  t->add_option("--history", train.history, "Also write the history table here");
  t->add_option("--seed", train.seed, "Init and sampling seed (default: S2W_SEED or 0)")->capture_default_str();

  FuseOptions fuse;
  auto* f = app.add_subcommand("fuse", "Fuse a PAN / LRMS pair with a checkpoint");
  f->add_option("--ckpt", fuse.ckpt)->required();
  f->add_option("--pan", fuse.pan)->required();
  f->add_option("--lrms", fuse.lrms)->required();
  f->add_option("--out", fuse.out)->required();

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Quality metrics, reduced or full resolution");
  auto* pred = e->add_option("--pred", ev.pred, "Fused image (reduced resolution)");
  auto* gt = e->add_option("--gt", ev.gt, "Ground truth");
  auto* fused = e->add_option("--fused", ev.fused, "Fused image (full resolution)");
  auto* lrms = e->add_option("--lrms", ev.lrms, "LRMS input");
  auto* pan = e->add_option("--pan", ev.pan, "PAN input");
  pred->needs(gt);
  gt->needs(pred);
  fused->needs(lrms)->needs(pan);
  lrms->needs(fused);
  pan->needs(fused);
  pred->excludes(fused);
  e->add_option("--ratio", ev.ratio, "Ratio for ERGAS")->capture_default_str()->check(CLI::PositiveNumber);
  e->add_option("--peak", ev.peak, "PSNR peak value")->capture_default_str();
  e->add_option("--table", ev.table, "Also write the metrics as JSON");
  e->add_option("--manifest", ev.manifest, "Write a run manifest");

  BenchOptions bench;
  bench.seed = default_seed(0);
  auto* b = app.add_subcommand("bench", "Time the scan or the 2D wavelet pair");
  b->add_option("--op", bench.op)->capture_default_str()->check(CLI::IsMember({"scan", "dwt"}));
  b->add_option("--sizes", bench.sizes, "Tokens (scan) or pixels (dwt)")->delimiter(',')->capture_default_str();
  b->add_option("--repeats", bench.repeats)->capture_default_str()->check(CLI::PositiveNumber);
  b->add_option("--channels", bench.channels)->capture_default_str()->check(CLI::PositiveNumber);
  b->add_option("--state", bench.state, "State size (scan)")->capture_default_str()->check(CLI::PositiveNumber);
  b->add_option("--seed", bench.seed)->capture_default_str();
  b->add_option("--manifest", bench.manifest, "Write a run manifest");

  DwtOptions dwt;
  auto* d = app.add_subcommand("dwt", "Haar transform of an image file");
  d->add_option("--mode", dwt.mode)->capture_default_str()->check(CLI::IsMember({"1d", "2d"}));
  d->add_option("--in", dwt.in)->required();
  d->add_option("--out", dwt.out, "Write the stacked coefficients");
  d->add_flag("--roundtrip", dwt.roundtrip, "Report reconstruction error");
  d->add_option("--manifest", dwt.manifest, "Write a run manifest");

  PreviewOptions preview;
  auto* p = app.add_subcommand("preview", "Render one band as a PGM");
  p->add_option("--in", preview.in)->required();
  p->add_option("--out", preview.out)->required();
  p->add_option("--band", preview.band)->capture_default_str();
  p->add_option("--lo", preview.lo)->capture_default_str();
  p->add_option("--hi", preview.hi)->capture_default_str();
  p->add_option("--manifest", preview.manifest, "Write a run manifest");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& pe) {
    return app.exit(pe, out, err) == 0 ? kOk : kUsage;
  }

  if (g->parsed())
    return cmd_gen(gen, out);
  if (t->parsed())
    return cmd_train(train, out);
  if (f->parsed())
    return cmd_fuse(fuse, out);
  if (e->parsed())
    return cmd_eval(ev, out);
  if (b->parsed())
    return cmd_bench(bench, out);
  if (d->parsed())
    return cmd_dwt(dwt, out);
  return cmd_preview(preview, out);
}
} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
  try {
    return dispatch(args, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumeric;
  } catch (const MetricError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumeric;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kData;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  }
}

} // namespace s2w::cli
