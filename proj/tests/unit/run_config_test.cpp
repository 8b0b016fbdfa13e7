#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "clbench/run_config.hpp"

using namespace clbench;
using nlohmann::json;

TEST_CASE("an empty document yields the documented defaults") {
  auto cfg = parse_run_config(json::object());
  CHECK(cfg.method == Method::ccp);
  CHECK(cfg.dataset == DatasetId::synthetic);
  CHECK(cfg.classes_per_task == 1);
  CHECK(cfg.batch_size == 10);
  CHECK(cfg.memory_size == 100);
  CHECK_FALSE(cfg.memory_is_total);
  CHECK(cfg.learning_rate == 0.1);
  CHECK(cfg.temperature == 0.2);
  CHECK(cfg.ema_rate == 0.99);
  CHECK(cfg.prototype_momentum == 0.9);
  CHECK(cfg.seeds == std::vector<uint64_t>{0});
  CHECK(cfg.eval_schedule == EvalSchedule::boundary);
  CHECK(cfg.encoder == EncoderKind::reduced_resnet18);
  CHECK(cfg.embedding_dim == 160);
}

TEST_CASE("documents round-trip through to_json and parse") {
  json doc = {{"method", "supbyol"},
              {"dataset", "synthetic"},
              {"classes_per_task", 2},
              {"memory_size", 17},
              {"encoder", "mlp"},
              {"embedding_dim", 64},
              {"seeds", {3, 1, 2}},
              {"eval_schedule", "even"},
              {"momentum_target", "buffer_mean"},
              {"ce_reduction", "sum"},
              {"insertion_policy", "class_balanced"}};
  auto cfg = parse_run_config(doc);
  CHECK(cfg.method == Method::supbyol);
  CHECK(cfg.classes_per_task == 2);
  CHECK(cfg.memory_size == 17);
  CHECK(cfg.encoder == EncoderKind::mlp);
  CHECK((cfg.seeds == std::vector<uint64_t>{3, 1, 2}));
  CHECK(cfg.eval_schedule == EvalSchedule::even);
  CHECK(cfg.momentum_target == MomentumTargetMode::buffer_mean);
  CHECK(cfg.ce_reduction == Reduction::sum);
  CHECK(cfg.insertion_policy == InsertionPolicy::class_balanced);

  auto again = parse_run_config(to_json(cfg));
  CHECK(to_json(again) == to_json(cfg));
}

TEST_CASE("unknown keys and wrong types abort the parse") {
  CHECK_THROWS_AS(parse_run_config({{"method", "ccp"}, {"memory_szie", 10}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"batch_size", "ten"}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"learning_rate", json::array()}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"seeds", "0"}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"method", "sgd"}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"dataset", "mnist"}}), std::invalid_argument);
}

TEST_CASE("range validation rejects inconsistent settings") {
  CHECK_THROWS_AS(parse_run_config({{"classes_per_task", 3}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"batch_size", 0}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"memory_size", 0}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"temperature", 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"ema_rate", 1.5}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"prototype_momentum", -0.1}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"seeds", json::array()}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"encoder", "reduced_resnet18"}, {"embedding_dim", 64}}),
                  std::invalid_argument);
  // The mlp encoder frees the embedding width.
  CHECK_NOTHROW(parse_run_config({{"encoder", "mlp"}, {"embedding_dim", 64}}));
  // 10 synthetic classes split into tasks of 5 is fine.
  CHECK_NOTHROW(parse_run_config({{"classes_per_task", 5}}));
}

TEST_CASE("overrides accept json values and fall back to bare strings") {
  json doc = json::object();
  apply_override(doc, "memory_size=500");
  apply_override(doc, "method=er");
  apply_override(doc, "seeds=[1,2]");
  apply_override(doc, "augment=false");
  CHECK(doc["memory_size"] == 500);
  CHECK(doc["method"] == "er");
  CHECK(doc["seeds"] == json::array({1, 2}));
  CHECK(doc["augment"] == false);
  CHECK_THROWS_AS(apply_override(doc, "no_equals_sign"), std::invalid_argument);

  auto cfg = parse_run_config(doc);
  CHECK(cfg.memory_size == 500);
  CHECK(cfg.method == Method::er);
  CHECK_FALSE(cfg.augment);
}

TEST_CASE("config hash is stable and covers the whole document") {
  auto base = parse_run_config(json::object());
  auto hash = config_hash(base);
  CHECK(hash.size() == 16);
  CHECK(hash == config_hash(base));
  CHECK(hash == config_hash(parse_run_config(to_json(base))));

  auto changed = base;
  changed.memory_size = 101;
  CHECK(config_hash(changed) != hash);
  auto other_method = base;
  other_method.method = Method::er;
  CHECK(config_hash(other_method) != hash);
  auto reseeded = base;
  reseeded.seeds = {5, 6, 7};
  CHECK(config_hash(reseeded) != hash);  // the seed list is part of the document
}

TEST_CASE("derived quantities follow the memory and dataset settings") {
  auto cfg = parse_run_config(json::object());
  CHECK(total_classes(cfg) == 10);
  CHECK(buffer_capacity(cfg) == 100 * 10);  // per-class semantics by default

  cfg.memory_is_total = true;
  CHECK(buffer_capacity(cfg) == 100);

  cfg.dataset = DatasetId::cifar100;
  cfg.memory_is_total = false;
  CHECK(total_classes(cfg) == 100);
  CHECK(buffer_capacity(cfg) == 100 * 100);

  cfg.synthetic_classes = 4;
  cfg.dataset = DatasetId::synthetic;
  CHECK(total_classes(cfg) == 4);
}

TEST_CASE("stream and learner configs inherit the right fields") {
  json doc = {{"method", "ccp"},    {"batch_size", 7},           {"classes_per_task", 2},
              {"augment", false},   {"encoder", "mlp"},          {"embedding_dim", 24},
              {"temperature", 0.4}, {"rehearsal_batch_size", 3}, {"synthetic_image_size", 6},
              {"synthetic_channels", 2}};
  auto cfg = parse_run_config(doc);

  auto sc = make_stream_config(cfg, 11);
  CHECK(sc.dataset_id == DatasetId::synthetic);
  CHECK(sc.batch_size == 7);
  CHECK(sc.classes_per_task == 2);
  CHECK_FALSE(sc.augment);
  CHECK(sc.seed == 11);
  CHECK(sc.synthetic.height == 6);
  CHECK(sc.synthetic.channels == 2);

  auto lc = make_learner_config(cfg, 11);
  CHECK(lc.method == Method::ccp);
  CHECK(lc.temperature == 0.4);
  CHECK(lc.rehearsal_batch_size == 3);
  CHECK(lc.seed == 11);
  CHECK(lc.net.encoder == EncoderKind::mlp);
  CHECK(lc.net.embedding_dim == 24);
  CHECK(lc.net.in_channels == 2);
  CHECK(lc.net.image_height == 6);
  CHECK(lc.net.image_width == 6);
  CHECK_FALSE(lc.augmentation.enabled);
  CHECK(lc.total_classes == 10);

  auto cifar = parse_run_config({{"dataset", "cifar10"}, {"data_dir", "/tmp/c"}});
  auto cs = make_stream_config(cifar, 0);
  CHECK(cs.dataset_id == DatasetId::cifar10);
  CHECK(cs.data_dir == "/tmp/c");
  auto cl = make_learner_config(cifar, 0);
  CHECK(cl.net.in_channels == 3);
  CHECK(cl.net.image_height == 32);
}

TEST_CASE("shuffled class order flows into the stream config per seed") {
  auto cfg = parse_run_config({{"shuffle_class_order", true}});
  auto a = make_stream_config(cfg, 1);
  auto b = make_stream_config(cfg, 1);
  auto c = make_stream_config(cfg, 2);
  REQUIRE_FALSE(a.class_order.empty());
  CHECK(a.class_order == b.class_order);
  CHECK(a.class_order != c.class_order);

  auto plain = make_stream_config(parse_run_config(json::object()), 1);
  CHECK(plain.class_order.empty());
}

TEST_CASE("load_run_config reads files and reports missing ones") {
  auto path = std::filesystem::temp_directory_path() / "clbench-config-test.json";
  {
    std::ofstream out(path);
    out << R"({"method": "er", "memory_size": 42})";
  }
  auto cfg = load_run_config(path.string());
  CHECK(cfg.method == Method::er);
  CHECK(cfg.memory_size == 42);
  std::filesystem::remove(path);
  CHECK_THROWS(load_run_config(path.string()));

  auto bad = std::filesystem::temp_directory_path() / "clbench-config-bad.json";
  {
    std::ofstream out(bad);
    out << "{not json";
  }
  CHECK_THROWS(load_run_config(bad.string()));
  std::filesystem::remove(bad);
}
