#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "cape/commands.hpp"
#include "cape/config_file.hpp"
#include "cape/csv.hpp"
#include "cape/errors.hpp"
#include "cape/manifest.hpp"
#include "cape/plots.hpp"
#include "cape/storage.hpp"
#include "cape/svg.hpp"

using namespace cape;
namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

// Fresh scratch directory per test, removed afterwards.
struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("capeseg_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

fs::path write_config(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const fs::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

int cli(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

std::size_t count_tag(const pt::ptree& tree, const std::string& tag) {
  std::size_t n = 0;
  for (const auto& [name, child] : tree) {
    if (name == tag) ++n;
    n += count_tag(child, tag);
  }
  return n;
}

// Parses the SVG as XML; throws on malformed documents.
pt::ptree parse_svg(const std::string& svg) {
  std::istringstream in(svg);
  pt::ptree tree;
  pt::read_xml(in, tree);
  return tree;
}

std::size_t data_polylines(const pt::ptree& tree) { return count_tag(tree, "polyline"); }

Dataset small_dataset(std::size_t n = 6) {
  FieldConfig c;
  c.height = 8;
  c.width = 8;
  c.channels = 2;
  c.length_scale = 1.0;
  c.seed = 4;
  return generate_dataset(c, n);
}

const char* kGenConfig =
    "# small field\n"
    "height = 16\nwidth = 16\nlength_scale = 2\n"
    "target_rate = 0.07\nseed = 5\nn_samples = 60\n";

const char* kTrainConfig =
    "lr = 0.003\nmax_epochs = 8\npatience = 3\ncape_epochs = 12\n"
    "batch_size = 8\nbins = 5\nfolds = 3\nfilters = 4\nseed = 9\n";

}  // namespace

TEST_CASE("dataset round-trip keeps float32 precision and exact outcomes") {
  const Dataset d = small_dataset();
  const Dataset back = decode_dataset(encode_dataset(d));
  REQUIRE(back.size() == d.size());
  CHECK(back.channels() == 2);
  CHECK(back.has_true_p());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.samples[i].outcomes == d.samples[i].outcomes);
    for (std::size_t j = 0; j < d.samples[i].inputs.size(); ++j) {
      REQUIRE(back.samples[i].inputs[j] == static_cast<double>(static_cast<float>(d.samples[i].inputs[j])));
    }
    for (std::size_t j = 0; j < d.samples[i].true_p->size(); ++j) {
      REQUIRE((*back.samples[i].true_p)[j] == static_cast<double>(static_cast<float>((*d.samples[i].true_p)[j])));
    }
  }
  // Re-encoding a decoded dataset is byte-stable.
  CHECK(encode_dataset(back) == encode_dataset(d));
}

TEST_CASE("dataset layout and header") {
  const Dataset d = small_dataset(3);
  const auto bytes = encode_dataset(d);
  CHECK(std::memcmp(bytes.data(), "CAPESEG1", 8) == 0);
  const DatasetHeader h = decode_dataset_header(bytes);
  CHECK(h.n_samples == 3);
  CHECK(h.channels == 2);
  CHECK(h.height == 8);
  CHECK(h.flags == kFlagTrueP);
  CHECK(h.file_bytes() == bytes.size());
  CHECK(bytes.size() == kDatasetHeaderBytes + 3 * (2 * 64 * 4 + 64 + 64 * 4));

  Dataset no_p = d;
  for (auto& s : no_p.samples) s.true_p.reset();
  const Dataset back = decode_dataset(encode_dataset(no_p));
  CHECK_FALSE(back.has_true_p());
}

TEST_CASE("malformed dataset files are format errors") {
  const auto good = encode_dataset(small_dataset(2));
  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_dataset(bad), doctest::Contains("magic"), FormatError);
  bad = good;
  bad[8] = 9;
  CHECK_THROWS_WITH_AS(decode_dataset(bad), doctest::Contains("version"), FormatError);
  bad = good;
  bad.pop_back();
  CHECK_THROWS_AS(decode_dataset(bad), FormatError);
  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_dataset(bad), FormatError);
  bad = good;
  bad[kDatasetHeaderBytes + 2 * 64 * 4] = 2;  // first outcome byte
  CHECK_THROWS_WITH_AS(decode_dataset(bad), doctest::Contains("non-binary"), FormatError);
  CHECK_THROWS_AS(decode_dataset({}), FormatError);
}

TEST_CASE("checkpoint round-trip is exact") {
  Rng rng(3);
  const ModelParams p = init_params(3, 5, rng);
  const auto bytes = encode_checkpoint(p);
  CHECK(decode_checkpoint(bytes) == p);
  auto bad = bytes;
  bad[0] = 'Z';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad.resize(bytes.size() - 8);
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad.push_back(1);
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);

  TempDir tmp;
  write_checkpoint(tmp / "m.ckpt", p);
  CHECK(read_checkpoint(tmp / "m.ckpt") == p);
  CHECK_THROWS_AS(read_checkpoint(tmp / "missing.ckpt"), FormatError);
}

TEST_CASE("config files") {
  ConfigFile cfg = ConfigFile::parse("a = 1\n# note\n\nb = 0.5  # trailing\nlist = 1, 2,3\n", "x.cfg");
  std::size_t a = 0;
  double b = 0;
  std::vector<std::size_t> list;
  cfg.get("a", a);
  cfg.get("b", b);
  cfg.get("list", list);
  CHECK(a == 1);
  CHECK(b == 0.5);
  CHECK(list == std::vector<std::size_t>{1, 2, 3});
  CHECK_NOTHROW(cfg.reject_unknown());

  CHECK_THROWS_WITH_AS(ConfigFile::parse("a = 1\na = 2\n", "x.cfg"), doctest::Contains("x.cfg:2"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(ConfigFile::parse("a = 1\nnonsense\n", "x.cfg"), doctest::Contains("x.cfg:2"),
                       ConfigError);

  ConfigFile typo = ConfigFile::parse("height = 8\nlenght_scale = 2\n", "y.cfg");
  FieldConfig f;
  read_field_config(typo, f);
  CHECK(f.height == 8);
  CHECK_THROWS_WITH_AS(typo.reject_unknown(), doctest::Contains("y.cfg:2: unknown key 'lenght_scale'"),
                       ConfigError);

  ConfigFile bad = ConfigFile::parse("\nlr = fast\n", "z.cfg");
  TrainConfig t;
  CHECK_THROWS_WITH_AS(read_train_config(bad, t), doctest::Contains("z.cfg:2"), ConfigError);
  ConfigFile neg = ConfigFile::parse("folds = -3\n", "z.cfg");
  CHECK_THROWS_AS(read_train_config(neg, t), ConfigError);
}

TEST_CASE("numbers round-trip through CSV text") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(20)) - 10.0);
    CHECK(std::stod(format_number(v)) == v);
  }
  CHECK(format_optional(std::nullopt) == "NA");
}

TEST_CASE("CSV parsing reports the offending line") {
  const CsvTable t = parse_csv("a,b\n1,2\n3,NA\n");
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1].line == 3);
  CHECK(t.number(t.rows[0], t.column("b")) == 2.0);
  CHECK_FALSE(t.number(t.rows[1], 1).has_value());
  CHECK_THROWS_WITH_AS(parse_csv("a,b\n1,2\n3\n"), doctest::Contains("line 3"), FormatError);
  CHECK_THROWS_WITH_AS(t.column("c"), doctest::Contains("'c'"), FormatError);
  const CsvTable junk = parse_csv("a\n1\nx\n");
  CHECK_THROWS_WITH_AS(junk.number(junk.rows[1], 0), doctest::Contains("line 3"), FormatError);
  CHECK_THROWS_AS(parse_csv(""), FormatError);
}

TEST_CASE("reliability CSV for the four-pixel example") {
  const std::vector<double> f{0.1, 0.2, 0.3, 0.4}, y{0, 0, 1, 1};
  const BinTable t = build_bins(f, y, 2);
  const CsvTable csv = parse_csv(reliability_csv(t));
  CHECK(csv.header == std::vector<std::string>{"bin", "q_lo", "q_hi", "count", "q", "p_emp"});
  REQUIRE(csv.rows.size() == 2);
  CHECK(csv.rows[0].cells[0] == "1");
  CHECK(*csv.number(csv.rows[0], 4) == doctest::Approx(0.15));
  CHECK(*csv.number(csv.rows[1], 5) == 1.0);
  CHECK(*csv.number(csv.rows[0], 2) == 0.2);

  const Chart chart = reliability_chart(csv);
  REQUIRE(chart.series.size() == 1);
  CHECK(chart.diagonal);
  CHECK(chart.series[0].x[0] == doctest::Approx(0.15));
  CHECK(chart.series[0].y[0] == 0.0);
  CHECK(chart.series[0].x[1] == doctest::Approx(0.35));
  CHECK(chart.series[0].y[1] == 1.0);
}

TEST_CASE("a calibrated table plots on the diagonal") {
  BinTable t;
  t.edges = {0, 0.25, 0.5, 1};
  t.count = {10, 10, 10};
  t.q = {0.1, 0.4, 0.8};
  t.p_emp = {0.1, 0.4, 0.8};
  const Chart chart = reliability_chart(parse_csv(reliability_csv(t)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(chart.series[0].x[i] == chart.series[0].y[i]);
  const std::string svg = render_svg(chart);
  CHECK(data_polylines(parse_svg(svg)) >= 1);
}

TEST_CASE("moving average") {
  const std::vector<double> flat(7, 2.5);
  for (double v : moving_average(flat, 3)) CHECK(v == 2.5);
  const std::vector<double> ramp{0, 1, 2, 3, 4};
  const auto m = moving_average(ramp, 3);
  CHECK(m == std::vector<double>{0.5, 1, 2, 3, 3.5});
  CHECK(moving_average(std::vector<double>{}, 3).empty());
}

TEST_CASE("nice ticks cover the range with round steps") {
  const auto t = nice_ticks(0.0, 1.0);
  CHECK(t.front() <= 0.0 + 1e-12);
  CHECK(t.back() >= 1.0 - 1e-12);
  CHECK(t.size() >= 3);
  CHECK(t.size() <= 12);
}

TEST_CASE("svg renders one polyline per series and escapes text") {
  Chart c;
  c.title = "a < b & c";
  for (int s = 0; s < 4; ++s) {
    Series series;
    series.label = "s" + std::to_string(s);
    series.x = {0, 1, 2};
    series.y = {1.0 * s, std::nan(""), 2.0 * s};
    series.dashed = s % 2 == 1;
    c.series.push_back(series);
  }
  const pt::ptree tree = parse_svg(render_svg(c));
  CHECK(data_polylines(tree) == 4);
  CHECK(tree.get<std::string>("svg.<xmlattr>.viewBox") == "0 0 800 600");
}

TEST_CASE("learning curve panels") {
  std::vector<EpochRecord> recs;
  for (std::size_t e = 1; e <= 8; ++e) {
    EpochRecord r;
    r.epoch = e;
    r.phase = e <= 5 ? Phase::kWarmup : Phase::kCape;
    r.train_loss = 1.0 / static_cast<double>(e);
    r.val_loss = r.train_loss + 0.1;
    r.brier = 0.2;
    r.kl_true = 0.01;
    recs.push_back(r);
  }
  const CsvTable csv = parse_csv(epoch_csv(recs));
  CHECK(csv.header == std::vector<std::string>{"epoch", "phase", "train_loss", "val_loss", "brier", "kl"});
  const auto charts = learning_curve_charts(csv);
  REQUIRE(charts.size() == 4);
  for (const auto& c : charts) {
    REQUIRE(c.marker_x.has_value());
    CHECK(*c.marker_x == 5.0);
    CHECK(c.series.size() == 4);  // raw and smoothed, per phase
  }
  CHECK(data_polylines(parse_svg(render_svg(charts, 2))) == 16);
}

TEST_CASE("sweep chart has a solid and a dashed series per size") {
  SweepReport r;
  for (double rho : {0.07, 0.3}) {
    for (std::size_t n : {30u, 60u, 90u}) {
      CellReport c;
      c.rho = rho;
      c.n_samples = n;
      c.bce.ece_mean = 0.1;
      c.cape.ece_mean = 0.05;
      c.bce.kl_mean = 0.01;
      c.cape.kl_mean = 0.02;
      r.cells.push_back(c);
    }
  }
  r.cells[1].ok = false;
  for (SweepMetric m : {SweepMetric::kEce, SweepMetric::kKl}) {
    const Chart chart = sweep_chart(r, m);
    REQUIRE(chart.series.size() == 6);
    std::size_t dashed = 0;
    for (const auto& s : chart.series) dashed += s.dashed ? 1 : 0;
    CHECK(dashed == 3);
    CHECK(data_polylines(parse_svg(render_svg(chart))) == 6);
  }
}

TEST_CASE("manifest digests verify and detect tampering") {
  TempDir tmp;
  write_text(tmp / "a.txt", "hello\n");
  RunManifest m;
  m.command = "test";
  m.seed = 3;
  m.started = utc_timestamp();
  m.outputs = {"a.txt"};
  write_manifest(tmp.path, m);
  CHECK(verify_manifest(tmp.path, kManifestName).empty());
  CHECK(sha256_hex(std::vector<std::uint8_t>{'a', 'b', 'c'}) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  write_text(tmp / "a.txt", "hellO\n");
  CHECK(verify_manifest(tmp.path, kManifestName) == std::vector<std::string>{"a.txt"});
  CHECK_THROWS_AS(verify_manifest(tmp.path, "none.json"), FormatError);
}

TEST_CASE("generate is reproducible and echoes the header") {
  TempDir tmp;
  const fs::path cfg = write_config(tmp / "gen.cfg", kGenConfig);
  REQUIRE(cli({"generate", "--config", cfg.string(), "--out", (tmp / "a").string()}) == kExitOk);
  REQUIRE(cli({"generate", "--config", cfg.string(), "--out", (tmp / "b").string()}) == kExitOk);
  CHECK(read_file(tmp / "a" / "dataset.bin") == read_file(tmp / "b" / "dataset.bin"));
  CHECK(verify_manifest(tmp / "a", kManifestName).empty());

  const Dataset d = read_dataset(tmp / "a" / "dataset.bin");
  CHECK(d.size() == 60);
  CHECK(d.height() == 16);
  CHECK(d.channels() == 3);
  CHECK(std::abs(event_rate(d) - 0.07) < 0.02);

  REQUIRE(cli({"generate", "--config", cfg.string(), "--out", (tmp / "c").string(), "--seed", "6"}) ==
          kExitOk);
  CHECK_FALSE(read_file(tmp / "c" / "dataset.bin") == read_file(tmp / "a" / "dataset.bin"));
}

TEST_CASE("outputs are not overwritten without --force") {
  TempDir tmp;
  const fs::path cfg = write_config(tmp / "gen.cfg", kGenConfig);
  const std::string out = (tmp / "a").string();
  REQUIRE(cli({"generate", "--config", cfg.string(), "--out", out}) == kExitOk);
  std::string err;
  CHECK(cli({"generate", "--config", cfg.string(), "--out", out}, &err) == kExitUsage);
  CHECK(err.find("--force") != std::string::npos);
  CHECK(cli({"generate", "--config", cfg.string(), "--out", out, "--force"}) == kExitOk);
}

TEST_CASE("train, evaluate and plot end to end") {
  TempDir tmp;
  const fs::path gen = write_config(tmp / "gen.cfg", kGenConfig);
  const fs::path train = write_config(tmp / "train.cfg", kTrainConfig);
  REQUIRE(cli({"generate", "--config", gen.string(), "--out", (tmp / "data").string()}) == kExitOk);
  const std::string data = (tmp / "data" / "dataset.bin").string();
  REQUIRE(cli({"train", data, "--config", train.string(), "--out", (tmp / "run").string()}) ==
          kExitOk);
  CHECK(verify_manifest(tmp / "run", kManifestName).empty());

  const CsvTable epochs = parse_csv(slurp(tmp / "run" / "epochs.csv"));
  const std::size_t phase = epochs.column("phase");
  std::size_t warm = 0, cape = 0;
  for (const auto& row : epochs.rows) (row.cells[phase] == "warmup" ? warm : cape) += 1;
  CHECK(warm >= 1);
  CHECK(warm <= 8);
  CHECK(cape >= 12 - 8);
  CHECK(warm + cape >= 12);
  // Epoch numbers increase by one across the phase switch, except when the
  // continuation restarts from an earlier best checkpoint.
  CHECK(*epochs.number(epochs.rows.back(), 0) == 12.0);

  // Checkpoint evaluation reproduces the in-memory test metrics.
  const CsvTable arms = parse_csv(slurp(tmp / "run" / "test_metrics.csv"));
  REQUIRE(arms.rows.size() == 2);
  CHECK(arms.rows[0].cells[0] == "bce");
  CHECK(arms.rows[1].cells[0] == "cape");

  REQUIRE(cli({"evaluate", data, "--checkpoint", (tmp / "run" / "cape.ckpt").string(), "--bins",
               "5", "--out", (tmp / "eval").string()}) == kExitOk);
  const CsvTable metrics = parse_csv(slurp(tmp / "eval" / "metrics.csv"));
  CHECK(metrics.header == std::vector<std::string>{"n_pixels", "bins", "ece", "brier", "kl"});
  CHECK(*metrics.number(metrics.rows[0], 0) == 60.0 * 256);
  // Whole-dataset metrics differ from test-split metrics.
  CHECK(*metrics.number(metrics.rows[0], 2) != *arms.number(arms.rows[1], 3));

  const CsvTable rel = parse_csv(slurp(tmp / "eval" / "reliability.csv"));
  double total = 0;
  for (const auto& row : rel.rows) total += *rel.number(row, 3);
  CHECK(total == 60.0 * 256);
  CHECK(rel.rows.size() == 5);

  // The same evaluation twice gives identical files.
  REQUIRE(cli({"evaluate", data, "--checkpoint", (tmp / "run" / "cape.ckpt").string(), "--bins",
               "5", "--out", (tmp / "eval2").string()}) == kExitOk);
  CHECK(slurp(tmp / "eval" / "metrics.csv") == slurp(tmp / "eval2" / "metrics.csv"));

  REQUIRE(cli({"plot", (tmp / "run" / "epochs.csv").string()}) == kExitOk);
  CHECK(data_polylines(parse_svg(slurp(tmp / "run" / "epochs.svg"))) == 16);
  CHECK(verify_manifest(tmp / "run", "epochs.manifest.json").empty());
  CHECK(verify_manifest(tmp / "run", kManifestName).empty());
  REQUIRE(cli({"plot", (tmp / "eval" / "reliability.csv").string(), "--out", (tmp / "figs").string()}) == kExitOk);
  CHECK(data_polylines(parse_svg(slurp(tmp / "figs" / "reliability.svg"))) >= 1);
}

TEST_CASE("train with lambda zero gives identical arms") {
  TempDir tmp;
  const fs::path gen = write_config(tmp / "gen.cfg", kGenConfig);
  const fs::path train = write_config(tmp / "train.cfg", kTrainConfig);
  REQUIRE(cli({"generate", "--config", gen.string(), "--out", (tmp / "data").string()}) == kExitOk);
  const std::string data = (tmp / "data" / "dataset.bin").string();
  REQUIRE(cli({"train", data, "--config", train.string(), "--lambda", "0", "--out",
               (tmp / "zero").string()}) == kExitOk);
  REQUIRE(cli({"train", data, "--config", train.string(), "--out", (tmp / "half").string()}) ==
          kExitOk);
  // With lambda = 0 the CaPE phase is plain BCE training continued, so the
  // warm-up rows match the default run and only the continuation differs.
  const CsvTable z = parse_csv(slurp(tmp / "zero" / "epochs.csv"));
  const CsvTable h = parse_csv(slurp(tmp / "half" / "epochs.csv"));
  REQUIRE(z.rows.size() == h.rows.size());
  for (std::size_t i = 0; i < z.rows.size(); ++i) {
    if (z.rows[i].cells[1] == "warmup") CHECK(z.rows[i].cells == h.rows[i].cells);
  }
  CHECK(read_file(tmp / "zero" / "bce.ckpt") == read_file(tmp / "half" / "bce.ckpt"));
  CHECK_FALSE(read_file(tmp / "zero" / "cape.ckpt") == read_file(tmp / "half" / "cape.ckpt"));
}

TEST_CASE("oracle evaluation and argument errors") {
  TempDir tmp;
  const fs::path gen = write_config(tmp / "gen.cfg", kGenConfig);
  REQUIRE(cli({"generate", "--config", gen.string(), "--out", (tmp / "data").string()}) == kExitOk);
  const std::string data = (tmp / "data" / "dataset.bin").string();
  REQUIRE(cli({"evaluate", data, "--oracle", "--out", (tmp / "o").string()}) == kExitOk);
  const CsvTable m = parse_csv(slurp(tmp / "o" / "metrics.csv"));
  CHECK(*m.number(m.rows[0], 4) < 1e-12);
  CHECK(*m.number(m.rows[0], 1) == 20.0);

  std::string err;
  CHECK(cli({"evaluate", data, "--out", (tmp / "x").string()}, &err) == kExitUsage);
  CHECK(err.find("exactly one") != std::string::npos);
  CHECK(cli({"evaluate", data, "--oracle", "--checkpoint", "m.ckpt", "--out", (tmp / "x").string()}) ==
        kExitUsage);

  // A checkpoint for a different channel count is a format error.
  Rng rng(1);
  write_checkpoint(tmp / "two.ckpt", init_params(2, 4, rng));
  CHECK(cli({"evaluate", data, "--checkpoint", (tmp / "two.ckpt").string(), "--out",
             (tmp / "y").string()}, &err) == kExitFormat);
  CHECK(err.find("shape mismatch") != std::string::npos);

  write_text(tmp / "junk.bin", "not a dataset");
  CHECK(cli({"evaluate", (tmp / "junk.bin").string(), "--oracle", "--out", (tmp / "z").string()}) ==
        kExitFormat);
  CHECK(cli({"frobnicate"}) == kExitUsage);
  CHECK(cli({"generate"}) == kExitUsage);
  CHECK(cli({"--help"}) == kExitOk);
  CHECK(cli({"generate", "--config", (tmp / "nope.cfg").string(), "--out", (tmp / "w").string()}) == kExitUsage);

  write_text(tmp / "weird.csv", "x,y\n1,2\n");
  CHECK(cli({"plot", (tmp / "weird.csv").string()}, &err) == kExitFormat);
  CHECK(err.find("line 1") != std::string::npos);

  const fs::path bad = write_config(tmp / "bad.cfg", "height = 16\nwidth = 16\ntarget_rate = 1.5\n");
  CHECK(cli({"generate", "--config", bad.string(), "--out", (tmp / "v").string()}, &err) == kExitUsage);
  CHECK(err.find("target_rate") != std::string::npos);
}

TEST_CASE("sweep exits with the partial status when a cell fails") {
  TempDir tmp;
  const fs::path cfg = write_config(tmp / "sweep.cfg",
                                    std::string("height = 8\nwidth = 8\nlength_scale = 1\n") +
                                        "lr = 0.003\nmax_epochs = 4\npatience = 2\ncape_epochs = 6\n"
                                        "batch_size = 4\nbins = 4\nfolds = 3\nfilters = 2\nseed = 1\n"
                                        "rhos = 0.3\nsizes = 2, 12\n");
  std::string err;
  CHECK(cli({"sweep", "--config", cfg.string(), "--out", (tmp / "s").string()}, &err) == kExitPartial);
  CHECK(err.find("1 sweep cell") != std::string::npos);
  const CsvTable summary = parse_csv(slurp(tmp / "s" / "sweep_summary.csv"));
  const std::size_t status = summary.column("status");
  std::size_t failed = 0;
  for (const auto& row : summary.rows) failed += row.cells[status] != "ok" ? 1 : 0;
  CHECK(failed >= 1);
  const CsvTable rows = parse_csv(slurp(tmp / "s" / "sweep.csv"));
  CHECK(rows.header == std::vector<std::string>{"rho", "n", "fold", "arm", "ece", "brier", "kl", "stop_epoch"});
  CHECK(rows.rows.size() == 2 * 3 * 2);
  CHECK(verify_manifest(tmp / "s", kManifestName).empty());
}
