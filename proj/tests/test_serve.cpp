#include <gtest/gtest.h>
#include <httplib.h>

#include <filesystem>
#include <future>
#include <thread>

#include "steerlm/model/checkpoint.hpp"
#include "steerlm/serve/service.hpp"
#include "support.hpp"

namespace steerlm {
namespace {

using nlohmann::json;
using testing::ToyWorld;

AdapterStack random_stack(const ModelConfig& cfg, const std::string& attribute, std::uint64_t seed) {
  AdapterStack s = AdapterStack::init(cfg, AdapterConfig{}, seed);
  std::mt19937_64 rng(seed);
  for (auto& l : s.layers) l.w_dec = Tensor::randn(l.w_dec.shape(), rng, Scalar(0.3));
  s.attribute = attribute;
  return s;
}

struct ServeFixture : ::testing::Test {
  ToyWorld w{11};
  ServiceArtifacts art;

  void SetUp() override {
    art.lm = std::shared_ptr<const TransformerLM>(w.lm.get(), [](const TransformerLM*) {});
    art.vocab = std::make_shared<const Vocab>(w.vocab);
    art.discriminator = std::make_shared<const Discriminator>(w.disc);
    art.token_scores = std::make_shared<const TokenScores>(build_token_scores(w.vocab, w.corpus.labeled[0]));
    art.adapters["sentiment:positive"] =
        std::make_shared<const AdapterStack>(random_stack(w.cfg, "sentiment:positive", 1));
    art.adapters["sentiment:negative"] =
        std::make_shared<const AdapterStack>(random_stack(w.cfg, "sentiment:negative", 2));
  }

  static json short_config(json j) {
    j["max_length"] = 6;
    return j;
  }

  static int status_of(const std::function<void()>& fn) {
    try {
      fn();
    } catch (const ApiError& e) {
      return e.status();
    }
    return 200;
  }
};

TEST_F(ServeFixture, CreateSessionReturnsEffectiveConfig) {
  Service svc(art);
  const json r = svc.create_session(short_config({{"method", "PP"}, {"attribute", "positive"}, {"alpha", 0.05}}));
  EXPECT_FALSE(r.at("session_id").get<std::string>().empty());
  const json& c = r.at("effective_config");
  EXPECT_EQ(c.at("method"), "PP");
  EXPECT_EQ(c.at("attribute"), "sentiment:positive");
  EXPECT_EQ(c.at("alpha"), 0.05);
  EXPECT_EQ(c.at("p"), PPLMConfig{}.iterations);
}

TEST_F(ServeFixture, InvalidConfigGivesFieldLevelReasons) {
  Service svc(art);
  try {
    svc.create_session({{"method", "PP"}, {"attribute", "positive"}, {"alpha", -1}, {"top_k", "ten"}, {"bogus", 1}});
    FAIL() << "expected 422";
  } catch (const ApiError& e) {
    EXPECT_EQ(e.status(), 422);
    const json& errs = e.body().at("errors");
    EXPECT_TRUE(errs.contains("alpha"));
    EXPECT_TRUE(errs.contains("top_k"));
    EXPECT_TRUE(errs.contains("bogus"));
    EXPECT_EQ(errs.size(), 3u);
  }
  const std::string id = svc.create_session({{"method", "DG"}}).at("session_id");
  try {
    svc.patch_config(id, {{"gm_scale", 2.0}, {"min_length", 50}});
    FAIL() << "expected 422";
  } catch (const ApiError& e) {
    EXPECT_EQ(e.status(), 422);
    EXPECT_TRUE(e.body().at("errors").contains("gm_scale"));
    EXPECT_TRUE(e.body().at("errors").contains("min_length"));
  }
  // A rejected patch leaves the session untouched.
  EXPECT_EQ(svc.session(id).at("config").at("gm_scale"), PPLMConfig{}.gm_scale);
}

TEST_F(ServeFixture, MissingAdapterNamesAvailableAttributes) {
  art.adapters.erase("sentiment:negative");
  Service svc(art);
  try {
    svc.create_session({{"method", "AD"}, {"attribute", "negative"}});
    FAIL() << "expected 422";
  } catch (const ApiError& e) {
    EXPECT_EQ(e.status(), 422);
    const std::string why = e.body().at("errors").at("attribute");
    EXPECT_NE(why.find("sentiment:positive"), std::string::npos) << why;
  }
}

TEST_F(ServeFixture, UnknownSessionIs404) {
  Service svc(art);
  EXPECT_EQ(status_of([&] { svc.turn("nope", {{"text", "hi"}}); }), 404);
  EXPECT_EQ(status_of([&] { svc.patch_config("nope", {{"p", 1}}); }), 404);
}

TEST_F(ServeFixture, TurnReturnsMetricsAndLosingCandidates) {
  Service svc(art);
  const std::string id =
      svc.create_session(short_config({{"method", "PP"}, {"attribute", "negative"}, {"p", 2}, {"candidates", 3},
                                       {"seed", 5}}))
          .at("session_id");
  const json r = svc.turn(id, {{"text", w.corpus.dialogues[0].turns[0]}});
  const auto ms = r.at("per_token_ms").get<std::vector<double>>();
  EXPECT_FALSE(ms.empty());
  for (double t : ms) EXPECT_GT(t, 0.0);
  EXPECT_TRUE(r.at("attribute_loss").is_number());
  EXPECT_EQ(r.at("candidates_considered"), 3);
  EXPECT_EQ(r.at("losing_candidates").size(), 2u);
  EXPECT_EQ(svc.session(id).at("history").size(), 2u);
  EXPECT_EQ(status_of([&] { svc.turn(id, {{"text", 3}}); }), 422);
}

TEST_F(ServeFixture, PpWithZeroIterationsMatchesDgUnderTheSameSeed) {
  Service svc(art);
  const std::string pp =
      svc.create_session(short_config({{"method", "PP"}, {"attribute", "positive"}, {"p", 0}, {"seed", 42}}))
          .at("session_id");
  const std::string dg =
      svc.create_session(short_config({{"method", "DG"}, {"attribute", "positive"}, {"seed", 42}})).at("session_id");
  for (int t = 0; t < 3; ++t) {
    const std::string text = w.corpus.dialogues[t].turns[0];
    EXPECT_EQ(svc.turn(pp, {{"text", text}}).at("response_text"), svc.turn(dg, {{"text", text}}).at("response_text"));
  }
}

TEST_F(ServeFixture, PatchingAttributeSwapsAdapterStacks) {
  Service svc(art);
  const std::string id =
      svc.create_session(short_config({{"method", "AD"}, {"attribute", "positive"}, {"seed", 1}})).at("session_id");
  const json h1 = svc.healthz();
  const std::string pos = checksum_hex(art.adapters["sentiment:positive"]->checksum());
  const std::string neg = checksum_hex(art.adapters["sentiment:negative"]->checksum());
  EXPECT_EQ(h1.at("bound_adapters"), json::array({pos}));
  EXPECT_EQ(svc.turn(id, {{"text", "hello"}}).at("adapter_checksum"), pos);

  svc.patch_config(id, {{"attribute", "negative"}});
  const json h2 = svc.healthz();
  EXPECT_EQ(h2.at("bound_adapters"), json::array({neg}));
  EXPECT_EQ(h2.at("checkpoints").at("lm"), h1.at("checkpoints").at("lm"));
  EXPECT_EQ(svc.turn(id, {{"text", "hello"}}).at("adapter_checksum"), neg);
}

TEST_F(ServeFixture, ConcurrentTurnOnOneSessionIs409) {
  Service svc(art);
  const std::string id = svc.create_session(short_config({{"method", "DG"}})).at("session_id");
  const std::string other = svc.create_session(short_config({{"method", "DG"}})).at("session_id");
  std::promise<void> entered, release;
  std::shared_future<void> released = release.get_future().share();
  svc.on_turn_locked = [&](const std::string& sid) {
    if (sid == id) {
      entered.set_value();
      released.wait();
    }
  };
  std::thread first([&] { svc.turn(id, {{"text", "hello"}}); });
  entered.get_future().wait();
  EXPECT_EQ(status_of([&] { svc.turn(id, {{"text", "again"}}); }), 409);
  // Another session is not blocked by the held lock.
  EXPECT_EQ(status_of([&] { svc.turn(other, {{"text", "hello"}}); }), 200);
  release.set_value();
  first.join();
  EXPECT_EQ(svc.session(id).at("history").size(), 2u);
}

TEST_F(ServeFixture, ParallelSessionsAreIndependentAndReplayable) {
  const std::vector<std::string> texts{w.corpus.dialogues[1].turns[0], w.corpus.dialogues[2].turns[0],
                                       w.corpus.dialogues[3].turns[0]};
  auto run = [&](Service& svc, const json& cfg) {
    const std::string id = svc.create_session(cfg).at("session_id");
    std::vector<std::string> out;
    for (const auto& t : texts) out.push_back(svc.turn(id, {{"text", t}}).at("response_text"));
    return out;
  };
  const json a = short_config({{"method", "WD"}, {"attribute", "positive"}, {"w", 2.0}, {"seed", 7}});
  const json b = short_config({{"method", "PP"}, {"attribute", "negative"}, {"p", 1}, {"seed", 8}});
  Service shared(art);
  std::vector<std::string> ra, rb;
  std::thread ta([&] { ra = run(shared, a); });
  std::thread tb([&] { rb = run(shared, b); });
  ta.join();
  tb.join();
  Service alone_a(art), alone_b(art);
  EXPECT_EQ(ra, run(alone_a, a));
  EXPECT_EQ(rb, run(alone_b, b));
}

TEST_F(ServeFixture, AttributesListsStacks) {
  Service svc(art);
  const json r = svc.attributes();
  EXPECT_EQ(r.at("attributes"), json::array({"sentiment:negative", "sentiment:positive"}));
  EXPECT_EQ(r.at("adapter_stacks").size(), 2u);
  EXPECT_EQ(r.at("methods"), json::array({"DG", "WD", "PP", "AD"}));
}

TEST(ServeArtifacts, LoadsDataDirAndLazilyBindsAdapters) {
  ToyWorld w(12);
  const auto dir = std::filesystem::temp_directory_path() / "steerlm_serve_data";
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_service_artifacts(dir.string()), std::runtime_error);
  std::filesystem::create_directories(dir / "adapters");
  w.vocab.save((dir / "vocab.txt").string());
  save_model((dir / "lm.bin").string(), w.cfg, w.lm->params());
  save_discriminator((dir / "discriminator.bin").string(), w.disc);
  save_adapters((dir / "adapters" / "sentiment_positive.bin").string(), w.cfg,
                random_stack(w.cfg, "sentiment:positive", 3));
  ServiceArtifacts art = load_service_artifacts(dir.string());
  EXPECT_EQ(art.lm->params().checksum(), w.lm->params().checksum());
  EXPECT_FALSE(art.token_scores);
  ASSERT_EQ(art.adapter_paths.size(), 1u);
  Service svc(std::move(art));
  EXPECT_TRUE(svc.healthz().at("checkpoints").at("adapters").empty());
  EXPECT_EQ(ServeFixture::status_of([&] { svc.create_session({{"method", "WD"}, {"attribute", "positive"}}); }), 422);
  svc.create_session({{"method", "AD"}, {"attribute", "positive"}});
  EXPECT_EQ(svc.healthz().at("checkpoints").at("adapters").size(), 1u);
  std::filesystem::remove_all(dir);
}

TEST_F(ServeFixture, HttpRoundTrip) {
  Service svc(art);
  HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  std::thread loop([&] { server.listen(); });
  httplib::Client cli("127.0.0.1", port);
  for (int i = 0; i < 100 && !cli.Get("/healthz"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));

  auto created = cli.Post("/sessions", short_config({{"method", "PP"}, {"attribute", "positive"}, {"p", 1}}).dump(),
                          "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 200);
  const std::string id = json::parse(created->body).at("session_id");

  auto turn = cli.Post("/sessions/" + id + "/turns", json{{"text", "how are you"}}.dump(), "application/json");
  ASSERT_TRUE(turn);
  EXPECT_EQ(turn->status, 200);
  const json tj = json::parse(turn->body);
  EXPECT_TRUE(tj.contains("per_token_ms"));
  EXPECT_TRUE(tj.contains("attribute_loss"));
  EXPECT_TRUE(tj.contains("candidates_considered"));

  auto bad = cli.Patch("/sessions/" + id + "/config", json{{"alpha", -2}}.dump(), "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 422);
  EXPECT_TRUE(json::parse(bad->body).at("errors").contains("alpha"));

  auto good = cli.Patch("/sessions/" + id + "/config", json{{"alpha", 0.2}}.dump(), "application/json");
  ASSERT_TRUE(good);
  EXPECT_EQ(json::parse(good->body).at("effective_config").at("alpha"), 0.2);

  auto missing = cli.Post("/sessions/zzz/turns", json{{"text", "x"}}.dump(), "application/json");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  auto garbage = cli.Post("/sessions", "{not json", "application/json");
  ASSERT_TRUE(garbage);
  EXPECT_EQ(garbage->status, 400);
  auto attrs = cli.Get("/attributes");
  ASSERT_TRUE(attrs);
  EXPECT_EQ(attrs->status, 200);
  auto health = cli.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(json::parse(health->body).at("status"), "ok");

  server.stop();
  loop.join();
}

}  // namespace
}  // namespace steerlm
