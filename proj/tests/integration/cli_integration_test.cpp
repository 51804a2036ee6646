#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "test_images.hpp"
#include "tmlp/stream.hpp"

namespace fs = std::filesystem;
using namespace tmlp;

namespace {

std::string cli_path() {
  const char* env = std::getenv("TMLP_CLI");
  REQUIRE_MESSAGE(env != nullptr, "TMLP_CLI must point at the tmlp binary");
  return env;
}

struct Workspace {
  fs::path dir;

  Workspace() {
    static int counter = 0;
    dir = fs::temp_directory_path() / ("tmlp_it_" + std::to_string(::getpid()) +
                                       "_" + std::to_string(counter++));
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }

  fs::path file(const std::string& name) const { return dir / name; }
};

int run_cli(const Workspace& ws, const std::string& args) {
  const fs::path log = ws.file("last_command.log");
  const std::string cmd =
      cli_path() + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(bool(in), ("missing file " + path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
  REQUIRE(out.good());
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

void write_test_png(const Workspace& ws, const std::string& name) {
  signals::save_image(testsupport::band_limited_image(32, 32, 5),
                      ws.file(name).string());
}

std::string image_config(const Workspace& ws, long iterations) {
  std::ostringstream cfg;
  cfg << "task = image\n"
      << "signal.image = " << ws.file("pic.png").string() << "\n"
      << "model.width = 16\n"
      << "model.layers = 2\n"
      << "train.iterations = " << iterations << "\n"
      << "train.batch_size = 256\n"
      << "eval.levels = 1, 2\n";
  return cfg.str();
}

}  // namespace

TEST_CASE("train, eval, truncate, and render round-trip on an image task") {
  Workspace ws;
  write_test_png(ws, "pic.png");
  write_file(ws.file("run.cfg"), image_config(ws, 150));
  const fs::path run = ws.file("run");

  REQUIRE(run_cli(ws, "train --config " + ws.file("run.cfg").string() +
                          " --out " + run.string()) == 0);

  const auto history = lines_of(slurp(run / "history.csv"));
  REQUIRE(history.size() == 151);
  CHECK(history[0] == "step,lr,loss_1,loss_2,total");

  const auto metrics = lines_of(slurp(run / "metrics.csv"));
  REQUIRE(metrics.size() == 3);
  CHECK(metrics[0] == "level,psnr,ssim,mean_abs_err,chamfer,normal_consistency");
  for (int row : {1, 2}) {
    const auto cells = split_csv(metrics[std::size_t(row)]);
    REQUIRE(cells.size() == 6);
    CHECK(cells[0] == std::to_string(row));
    CHECK(std::stod(cells[1]) > 5.0);
    CHECK(std::stod(cells[2]) > 0.0);
    CHECK(cells[3].empty());
  }
  for (const char* name : {"lod_1.png", "lod_2.png"}) {
    const auto img = signals::load_image((run / name).string());
    CHECK(img.width == 32);
    CHECK(img.height == 32);
    CHECK(img.channels == 1);
  }

  const fs::path eval_dir = ws.file("eval");
  REQUIRE(run_cli(ws, "eval " + (run / "model.tmlp").string() + " --config " +
                          ws.file("run.cfg").string() + " --out " +
                          eval_dir.string()) == 0);
  CHECK(slurp(eval_dir / "metrics.csv") == slurp(run / "metrics.csv"));
  CHECK(!fs::exists(eval_dir / "lod_1.png"));

  const auto bytes = stream::read_container((run / "model.tmlp").string());
  const auto chunks = stream::chunk_iter(bytes);
  REQUIRE(chunks.size() == 2);
  const fs::path trunc = ws.file("trunc.tmlp");
  REQUIRE(run_cli(ws, "truncate " + (run / "model.tmlp").string() + " 1 " +
                          trunc.string()) == 0);
  CHECK(fs::file_size(trunc) == chunks[0].offset + chunks[0].length);

  const fs::path shallow = ws.file("shallow");
  REQUIRE(run_cli(ws, "render " + trunc.string() + " --resolution 16 --out " +
                          shallow.string()) == 0);
  CHECK(fs::exists(shallow / "lod_1.png"));
  CHECK(!fs::exists(shallow / "lod_2.png"));

  const fs::path frac = ws.file("frac");
  REQUIRE(run_cli(ws, "render " + (run / "model.tmlp").string() +
                          " --levels 1.5 --resolution 24 --out " +
                          frac.string()) == 0);
  const auto img = signals::load_image((frac / "lod_1.5.png").string());
  CHECK(img.width == 24);
  CHECK(img.height == 24);
}

TEST_CASE("the seed flag makes training runs reproducible") {
  Workspace ws;
  write_test_png(ws, "pic.png");
  write_file(ws.file("run.cfg"), image_config(ws, 60));
  const std::string base =
      "train --config " + ws.file("run.cfg").string() + " --out ";

  REQUIRE(run_cli(ws, base + ws.file("a").string() + " --seed 11") == 0);
  REQUIRE(run_cli(ws, base + ws.file("b").string() + " --seed 11") == 0);
  REQUIRE(run_cli(ws, base + ws.file("c").string() + " --seed 12") == 0);

  const auto a = slurp(ws.file("a") / "model.tmlp");
  const auto b = slurp(ws.file("b") / "model.tmlp");
  const auto c = slurp(ws.file("c") / "model.tmlp");
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("training on a noisy target keeps a copy of what it trained on") {
  Workspace ws;
  write_test_png(ws, "pic.png");
  write_file(ws.file("run.cfg"),
             image_config(ws, 5) + "signal.noise_sigma = 15\n");
  REQUIRE(run_cli(ws, "train --config " + ws.file("run.cfg").string() +
                          " --out " + ws.file("run").string()) == 0);
  const auto target = signals::load_image((ws.file("run") / "train_target.png").string());
  CHECK(target.width == 32);
  CHECK(target.height == 32);
}

TEST_CASE("an sdf2d run writes contours and distance metrics") {
  Workspace ws;
  std::ostringstream cfg;
  cfg << "task = sdf2d\n"
      << "signal.shape = circle2d\n"
      << "signal.shape_params = 0.5\n"
      << "model.width = 16\n"
      << "model.layers = 2\n"
      << "train.iterations = 120\n"
      << "train.batch_size = 512\n"
      << "eval.levels = 2\n"
      << "render.resolution = 32\n";
  write_file(ws.file("run.cfg"), cfg.str());
  const fs::path run = ws.file("run");

  REQUIRE(run_cli(ws, "train --config " + ws.file("run.cfg").string() +
                          " --out " + run.string()) == 0);
  CHECK(fs::exists(run / "contour_2.obj"));

  const auto metrics = lines_of(slurp(run / "metrics.csv"));
  REQUIRE(metrics.size() == 2);
  const auto cells = split_csv(metrics[1]);
  REQUIRE(cells.size() == 6);
  CHECK(cells[1].empty());
  CHECK(std::stod(cells[3]) < 1.0);
  CHECK(std::stod(cells[4]) < 1.0);
  CHECK(std::stod(cells[5]) >= -1.0);
}

TEST_CASE("an sdf3d run writes meshes") {
  Workspace ws;
  std::ostringstream cfg;
  cfg << "task = sdf3d\n"
      << "signal.shape = sphere3d\n"
      << "signal.shape_params = 0.5\n"
      << "model.width = 16\n"
      << "model.layers = 2\n"
      << "train.iterations = 60\n"
      << "train.batch_size = 512\n"
      << "eval.levels = 2\n"
      << "render.resolution = 24\n";
  write_file(ws.file("run.cfg"), cfg.str());
  const fs::path run = ws.file("run");

  REQUIRE(run_cli(ws, "train --config " + ws.file("run.cfg").string() +
                          " --out " + run.string()) == 0);
  CHECK(fs::exists(run / "mesh_2.obj"));
  CHECK(fs::exists(run / "model.tmlp"));
}

TEST_CASE("probe compares retrained heads with tail outputs") {
  Workspace ws;
  write_test_png(ws, "pic.png");
  write_file(ws.file("run.cfg"),
             image_config(ws, 80) + "probe.head_iterations = 40\n");

  REQUIRE(run_cli(ws, "probe --config " + ws.file("run.cfg").string() +
                          " --out " + ws.file("run").string()) == 0);
  const auto table = lines_of(slurp(ws.file("run") / "probe.csv"));
  REQUIRE(table.size() == 3);
  CHECK(table[0] == "level,head_retrain_psnr,tailed_psnr");
  for (int row : {1, 2}) {
    const auto cells = split_csv(table[std::size_t(row)]);
    REQUIRE(cells.size() == 3);
    CHECK(cells[0] == std::to_string(row));
    CHECK(std::stod(cells[1]) > 0.0);
    CHECK(std::stod(cells[2]) > 0.0);
  }
}

TEST_CASE("bad invocations exit with the documented codes") {
  Workspace ws;
  write_test_png(ws, "pic.png");
  write_file(ws.file("run.cfg"), image_config(ws, 5));
  const fs::path run = ws.file("run");
  REQUIRE(run_cli(ws, "train --config " + ws.file("run.cfg").string() +
                          " --out " + run.string()) == 0);
  const fs::path model = run / "model.tmlp";

  SUBCASE("usage errors") {
    CHECK(run_cli(ws, "") == 1);
    CHECK(run_cli(ws, "trample --config x") == 1);
    CHECK(run_cli(ws, "train") == 1);
  }

  SUBCASE("config errors") {
    write_file(ws.file("bad_key.cfg"), image_config(ws, 5) + "mystery = 1\n");
    CHECK(run_cli(ws, "train --config " + ws.file("bad_key.cfg").string()) == 1);

    std::ostringstream gone;
    gone << "task = image\nsignal.image = " << ws.file("gone.png").string() << "\n";
    write_file(ws.file("gone.cfg"), gone.str());
    CHECK(run_cli(ws, "train --config " + ws.file("gone.cfg").string()) == 1);

    CHECK(run_cli(ws, "truncate " + model.string() + " 0 " +
                          ws.file("t.tmlp").string()) == 1);
    CHECK(run_cli(ws, "truncate " + model.string() + " 99 " +
                          ws.file("t.tmlp").string()) == 1);
  }

  SUBCASE("missing and malformed files") {
    CHECK(run_cli(ws, "train --config " + ws.file("absent.cfg").string()) == 3);
    CHECK(run_cli(ws, "eval " + ws.file("absent.tmlp").string() + " --config " +
                          ws.file("run.cfg").string()) == 3);

    write_file(ws.file("garbage.tmlp"), "not a container");
    CHECK(run_cli(ws, "render " + ws.file("garbage.tmlp").string() +
                          " --out " + ws.file("r").string()) == 3);
  }

  SUBCASE("corrupted payloads") {
    auto bytes = stream::read_container(model.string());
    const auto chunks = stream::chunk_iter(bytes);
    bytes[chunks.back().offset + 8] ^= 0x40;
    stream::write_container(ws.file("corrupt.tmlp").string(), bytes);
    CHECK(run_cli(ws, "render " + ws.file("corrupt.tmlp").string() +
                          " --out " + ws.file("r").string()) == 3);
  }
}
