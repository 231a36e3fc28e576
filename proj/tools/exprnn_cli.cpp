// exprnn: train, evaluate and verify orthogonal RNNs with the exponential
// parametrization.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "exprnn/train.hpp"
#include "exprnn/verify.hpp"

namespace {

using namespace exprnn;

const std::map<std::string, Task> kTasks{
    {"copying", Task::copying}, {"mnist", Task::mnist}, {"pmnist", Task::pmnist}};
const std::map<std::string, OptimizerKind> kOptimizers{
    {"sgd", OptimizerKind::sgd}, {"rmsprop", OptimizerKind::rmsprop}, {"adam", OptimizerKind::adam}};
const std::map<std::string, KernelInit> kInits{{"henaff", KernelInit::henaff},
                                               {"cayley", KernelInit::cayley}};

struct TaskOptions {
  std::string task = "copying";
  std::string data_dir;
};

void add_task_options(CLI::App* app, TrainConfig& cfg, TaskOptions& t) {
  app->add_option("--task", t.task, "copying, mnist or pmnist")
      ->check(CLI::IsMember({"copying", "mnist", "pmnist"}))
      ->capture_default_str();
  app->add_option("--alphabet", cfg.copying.alphabet, "copying: alphabet size N")
      ->capture_default_str();
  app->add_option("--copy-len", cfg.copying.copy_len, "copying: symbols to recall K")
      ->capture_default_str();
  app->add_option("--spacing", cfg.copying.spacing, "copying: blank gap L")->capture_default_str();
  app->add_option("--eval-batch", cfg.eval_batch, "copying: held-out batch size")
      ->capture_default_str();
  app->add_option("--seed", cfg.seed, "seed of the single run generator")->capture_default_str();
  app->add_option("--data-dir", t.data_dir,
                  "directory with the four MNIST IDX files (default: $EXPRNN_DATA_DIR)");
  app->add_option("--test-subset", cfg.test_subset, "mnist: test images to use (0 = all)")
      ->capture_default_str();
}

void finish_task_options(TrainConfig& cfg, const TaskOptions& t) {
  cfg.task = kTasks.at(t.task);
  cfg.data_dir = t.data_dir;
}

std::string summary_line(const TrainConfig& cfg, const TrainResult& res) {
  std::ostringstream os;
  os << "summary task=" << to_string(cfg.task) << " steps=" << res.steps;
  if (!res.rows.empty()) {
    const MetricsRow& r = res.rows.back();
    const EvalResult& e = res.evals.back();
    os << " train_loss=" << r.train_loss << " eval_loss=" << e.loss
       << (cfg.task == Task::copying ? " recall_accuracy=" : " test_accuracy=") << e.accuracy
       << " ortho_residual=" << r.ortho_residual << " param_norm=" << r.param_norm;
  }
  if (cfg.task == Task::copying) os << " baseline=" << copying_baseline(cfg.copy_config());
  return os.str();
}

int run_train(TrainConfig cfg, const TaskOptions& t, bool quiet) {
  finish_task_options(cfg, t);
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const auto dir = std::filesystem::path(cfg.out_dir);
  std::ofstream csv(dir / "metrics.csv");
  if (!csv) throw Error("cannot write '" + (dir / "metrics.csv").string() + "'");
  TrainHooks hooks;
  hooks.csv = &csv;
  if (!quiet) {
    hooks.on_row = [](const MetricsRow& r, const EvalResult& e) {
      std::cout << "step=" << r.step << " train_loss=" << r.train_loss
                << " eval_metric=" << r.eval_metric << " accuracy=" << e.accuracy
                << " ortho_residual=" << r.ortho_residual << std::endl;
      return true;
    };
  }
  const TrainResult res = train(cfg, hooks);
  save_checkpoint(res.model, (dir / "final.ckpt").string());
  std::cout << summary_line(cfg, res) << std::endl;
  return 0;
}

int run_eval(TrainConfig cfg, const TaskOptions& t, const std::string& ckpt,
             std::size_t expect_hidden) {
  finish_task_options(cfg, t);
  RnnModel model = load_checkpoint(ckpt);
  if (expect_hidden != 0 && expect_hidden != model.hidden()) {
    throw DimensionError("checkpoint '" + ckpt + "' has hidden size " +
                         std::to_string(model.hidden()) + ", --hidden asks for " +
                         std::to_string(expect_hidden));
  }
  if (cfg.task == Task::copying) {
    const CopyConfig cc = cfg.copy_config();
    cc.validate();
    if (model.input_dim() != cc.vocab() || model.classes() != cc.vocab()) {
      throw DimensionError("checkpoint has input size " + std::to_string(model.input_dim()) +
                           " and " + std::to_string(model.classes()) +
                           " classes; copying with N=" + std::to_string(cc.alphabet) +
                           " needs " + std::to_string(cc.vocab()) + " for both");
    }
    CopyConfig held = cc;
    held.batch = cfg.eval_batch;
    Rng rng(cfg.seed);
    const EvalResult e = evaluate_copying(model, cc, gen_copying_batch(held, rng));
    std::cout << "eval task=copying cross_entropy=" << e.loss << " recall_accuracy=" << e.accuracy
              << " baseline=" << copying_baseline(cc)
              << " uniform_cross_entropy=" << std::log(static_cast<double>(cc.vocab()))
              << std::endl;
    return 0;
  }
  if (model.input_dim() != 1 || model.classes() != 10) {
    throw DimensionError("checkpoint is not a pixel-MNIST model (input " +
                         std::to_string(model.input_dim()) + ", classes " +
                         std::to_string(model.classes()) + ")");
  }
  const std::string dir = resolve_data_dir(cfg);
  if (dir.empty()) throw Error("MNIST eval needs --data-dir or EXPRNN_DATA_DIR");
  MnistData data = load_mnist(dir, 1, cfg.test_subset);
  if (cfg.task == Task::pmnist) {
    data.test =
        permute_pixels(data.test, PixelPermutation::from_seed(kMnistPixels, kPermutationSeed));
  }
  const EvalResult e = evaluate_images(model, data.test);
  std::cout << "eval task=" << to_string(cfg.task) << " test_accuracy=" << e.accuracy
            << " cross_entropy=" << e.loss << std::endl;
  return 0;
}

// key=value lines (blank lines and '#' comments allowed) become `--key=value`
// arguments placed ahead of the command line, so explicit flags win.
std::vector<std::string> config_args(const std::string& path, const CLI::App& sub) {
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  std::vector<std::string> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const std::string body = CLI::detail::trim_copy(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw CLI::ConversionError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = CLI::detail::trim_copy(body.substr(0, eq));
    const std::string value = CLI::detail::trim_copy(body.substr(eq + 1));
    const CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (key == "config" || opt == nullptr) {
      throw CLI::ConversionError(path + ":" + std::to_string(lineno) + ": unknown key '" + key +
                                 "'");
    }
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

int run_verify(const std::string& scope, std::uint64_t seed) {
  bool ok = true;
  for (const verify::Check& c : verify::run_scope(scope, seed)) {
    std::cout << "verify " << c.name << ' ' << (c.pass ? "PASS" : "FAIL")
              << " measured=" << c.measured << " threshold=" << c.threshold << '\n';
    ok = ok && c.pass;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Orthogonal RNNs through the exponential parametrization"};
  app.require_subcommand(1);

  TrainConfig train_cfg;
  TaskOptions train_task;
  std::string optimizer = "rmsprop", init;
  bool quiet = false;
  CLI::App* train = app.add_subcommand("train", "train a model and write metrics.csv");
  std::string config_path;
  train->add_option("--config", config_path, "key=value file; command-line flags override it")
      ->check(CLI::ExistingFile);
  add_task_options(train, train_cfg, train_task);
  train->add_option("--hidden", train_cfg.hidden, "hidden size p")->capture_default_str();
  train->add_option("--optimizer", optimizer, "sgd, rmsprop or adam")
      ->check(CLI::IsMember({"sgd", "rmsprop", "adam"}))
      ->capture_default_str();
  train->add_option("--lr", train_cfg.lr,
                    "learning rate of the non-orthogonal parameters (default per task)");
  train->add_option("--ortho-lr", train_cfg.ortho_lr,
                    "learning rate of the orthogonal kernel (default lr/10)");
  train->add_option("--init", init, "henaff or cayley (default: henaff for copying, cayley for mnist)")
      ->check(CLI::IsMember({"henaff", "cayley"}));
  train->add_option("--batch", train_cfg.batch, "batch size")->capture_default_str();
  train->add_option("--iterations", train_cfg.iterations, "copying: optimizer steps")
      ->capture_default_str();
  train->add_option("--epochs", train_cfg.epochs, "mnist: epochs")->capture_default_str();
  train->add_option("--out-dir", train_cfg.out_dir, "output directory")->capture_default_str();
  train->add_option("--checkpoint-every", train_cfg.checkpoint_every,
                    "steps between checkpoints (0 = final only)")
      ->capture_default_str();
  train->add_option("--eval-every", train_cfg.eval_every,
                    "steps between metrics rows (0 = 100 for copying, each epoch for mnist)")
      ->capture_default_str();
  train->add_option("--train-subset", train_cfg.train_subset, "mnist: training images (0 = all)")
      ->capture_default_str();
  train->add_flag("--wall-clock", train_cfg.wall_clock,
                  "fill wall_ms (otherwise 0, keeping the CSV reproducible)");
  train->add_flag("--quiet", quiet, "print only the summary line");

  TrainConfig eval_cfg;
  TaskOptions eval_task;
  std::string ckpt;
  std::size_t eval_hidden = 0;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--hidden", eval_hidden, "expected hidden size (checked against the checkpoint)");
  add_task_options(eval, eval_cfg, eval_task);

  std::string scope;
  std::uint64_t verify_seed = kDefaultSeed;
  CLI::App* verify = app.add_subcommand("verify", "run numerical property checks");
  verify->add_option("scope", scope, "expm, gradients, retractions, geometry or all")
      ->required()
      ->check(CLI::IsMember({"expm", "gradients", "retractions", "geometry", "all"}));
  verify->add_option("--seed", verify_seed, "seed of the sampled instances")->capture_default_str();

  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  for (CLI::App* sub : {train, eval, verify}) {
    for (CLI::Option* opt : sub->get_options()) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }

  CLI11_PARSE(app, argc, argv);
  if (*train && !config_path.empty()) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
      const auto at = std::find(args.begin(), args.end(), std::string("train"));
      const std::vector<std::string> extra = config_args(config_path, *train);
      args.insert(at + 1, extra.begin(), extra.end());
      std::reverse(args.begin(), args.end());
      app.clear();
      app.parse(args);
    } catch (const CLI::Error& e) {
      return app.exit(e);
    }
  }

  try {
    if (*train) {
      train_cfg.optimizer = kOptimizers.at(optimizer);
      if (!init.empty()) train_cfg.init = kInits.at(init);
      return run_train(train_cfg, train_task, quiet);
    }
    if (*eval) return run_eval(eval_cfg, eval_task, ckpt, eval_hidden);
    if (*verify) return run_verify(scope, verify_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
