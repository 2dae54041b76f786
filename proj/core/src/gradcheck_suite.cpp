#include "aal/gradcheck_suite.hpp"

#include "aal/link.hpp"
#include "aal/models.hpp"
#include "aal/ops.hpp"

namespace aal {

namespace {

using D = Tensor<double>;

D random_tensor(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
  D t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Values in [-1, -0.2] u [0.2, 1], away from the relu kink.
D off_kink_tensor(Rng& rng, const Shape& shape) {
  D t(shape);
  for (auto& v : t.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.0);
  return t;
}

D project(const D& y, const D& r) { return sum(mul(y, r)); }

struct Suite {
  Rng rng;
  GradcheckOptions options;
  std::vector<GradcheckReport> reports;

  // f maps the inputs to a tensor; it is projected onto a fixed random
  // tensor of the output's shape.
  template <typename F>
  void unary(const std::string& name, D x, F f) {
    const D r = random_tensor(rng, f(x).shape());
    reports.push_back(gradcheck(name, [x, r, f] { return project(f(x), r); }, {{"x", x}}, options));
  }

  template <typename F>
  void binary(const std::string& name, D a, D b, F f) {
    const D r = random_tensor(rng, f(a, b).shape());
    reports.push_back(gradcheck(name, [a, b, r, f] { return project(f(a, b), r); }, {{"a", a}, {"b", b}}, options));
  }
};

StudentConfig toy_student() {
  StudentConfig s;
  s.image_size = 8;
  s.patch_size = 4;
  s.embed_dim = 8;
  s.depth = 2;
  s.heads = 2;
  s.mlp_hidden = 12;
  s.classes = 3;
  return s;
}

TeacherConfig toy_teacher() {
  TeacherConfig t;
  t.widths = {2, 3};
  t.image_size = 8;
  t.classes = 3;
  return t;
}

}  // namespace

GradcheckReport gradcheck_objective(std::uint64_t seed, const GradcheckOptions& options) {
  Rng rng(seed);
  const StudentConfig sc = toy_student();
  Student<double> student(sc, rng);
  Teacher<double> teacher(toy_teacher(), rng);
  LinkWeights<double> links = init_links<double>(teacher.config().total_channels(), sc.maps(), rng);
  for (auto& v : links.b.data()) v = rng.uniform(-0.1, 0.1);
  const D images = random_tensor(rng, {2, 3, 8, 8}, 0.0, 1.0);
  const std::vector<int> labels = {0, 2};
  const D acts = teacher_forward(teacher, images, sc.grid()).acts.maps;
  const double lambda = lambda_at(LambdaSchedule{}, 0);

  NamedTensors<double> params = student.parameters();
  params.emplace_back("aal.W", links.W);
  params.emplace_back("aal.b", links.b);
  auto loss = [student, links, images, labels, acts, lambda] {
    const StudentOutput<double> out = student.forward(images);
    const D ce = cross_entropy_loss(out.logits, labels);
    const D att = attention_loss(augment(out.attn, links), acts);
    return total_loss(ce, att, lambda);
  };
  return gradcheck("objective", loss, params, options);
}

std::vector<GradcheckReport> gradcheck_suite(std::uint64_t seed, const GradcheckOptions& options) {
  Suite s{Rng(seed), options, {}};
  Rng& rng = s.rng;

  s.binary("matmul", random_tensor(rng, {2, 3, 4}), random_tensor(rng, {4, 5}),
           [](const D& a, const D& b) { return matmul(a, b); });
  {
    const D x = random_tensor(rng, {2, 3, 4}), w = random_tensor(rng, {4, 5}), b = random_tensor(rng, {5});
    const D r = random_tensor(rng, {2, 3, 5});
    s.reports.push_back(gradcheck("linear", [=] { return project(linear(x, w, b), r); },
                                  {{"x", x}, {"w", w}, {"b", b}}, options));
  }
  s.binary("add", random_tensor(rng, {3, 4}), random_tensor(rng, {4}),
           [](const D& a, const D& b) { return add(a, b); });
  s.binary("sub", random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4}),
           [](const D& a, const D& b) { return sub(a, b); });
  s.binary("mul", random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4}),
           [](const D& a, const D& b) { return mul(a, b); });
  s.unary("scale", random_tensor(rng, {3, 4}), [](const D& x) { return scale(x, 0.37); });
  s.unary("relu", off_kink_tensor(rng, {3, 4}), [](const D& x) { return relu(x); });
  s.unary("gelu", random_tensor(rng, {3, 4}, -3.0, 3.0), [](const D& x) { return gelu(x); });
  s.unary("softmax_last", random_tensor(rng, {2, 3, 5}), [](const D& x) { return softmax(x, -1); });
  s.unary("softmax_inner", random_tensor(rng, {2, 3, 5}), [](const D& x) { return softmax(x, 1); });
  s.unary("sum", random_tensor(rng, {3, 4}), [](const D& x) { return scale(sum(x), 1.0); });
  s.unary("mean", random_tensor(rng, {3, 4}), [](const D& x) { return scale(mean(x), 1.0); });
  {
    const D x = random_tensor(rng, {2, 3, 6}), g = random_tensor(rng, {6}, 0.5, 1.5), b = random_tensor(rng, {6});
    const D r = random_tensor(rng, {2, 3, 6});
    s.reports.push_back(gradcheck("layer_norm", [=] { return project(layer_norm(x, g, b), r); },
                                  {{"x", x}, {"gamma", g}, {"beta", b}}, options));
  }
  for (bool training : {true, false}) {
    const D x = random_tensor(rng, {4, 3, 2, 2}), g = random_tensor(rng, {3}, 0.5, 1.5), b = random_tensor(rng, {3});
    const D mean0 = random_tensor(rng, {3}, -0.2, 0.2), var0 = random_tensor(rng, {3}, 0.5, 1.5);
    const D r = random_tensor(rng, {4, 3, 2, 2});
    auto loss = [=] {
      D m = mean0.clone(), v = var0.clone();
      return project(batch_norm(x, g, b, m, v, training), r);
    };
    s.reports.push_back(gradcheck(training ? "batch_norm_train" : "batch_norm_eval", loss,
                                  {{"x", x}, {"gamma", g}, {"beta", b}}, options));
  }
  {
    const D x = random_tensor(rng, {2, 2, 5, 5}), w = random_tensor(rng, {3, 2, 3, 3}), b = random_tensor(rng, {3});
    const D r1 = random_tensor(rng, {2, 3, 5, 5}), r2 = random_tensor(rng, {2, 3, 2, 2});
    s.reports.push_back(gradcheck("conv2d_pad1", [=] { return project(conv2d(x, w, b, 1, 1), r1); },
                                  {{"x", x}, {"w", w}, {"b", b}}, options));
    s.reports.push_back(gradcheck("conv2d_stride2", [=] { return project(conv2d(x, w, b, 2, 0), r2); },
                                  {{"x", x}, {"w", w}, {"b", b}}, options));
  }
  s.unary("max_pool2d", random_tensor(rng, {2, 2, 4, 5}), [](const D& x) { return max_pool2d(x); });
  s.unary("global_avg_pool", random_tensor(rng, {2, 3, 3, 3}), [](const D& x) { return global_avg_pool(x); });
  {
    const std::vector<std::size_t> idx = {2, 0, 2, 4};
    s.unary("embedding", random_tensor(rng, {5, 3}), [idx](const D& t) { return embedding(t, idx); });
  }
  s.unary("reshape", random_tensor(rng, {2, 6}), [](const D& x) { return reshape(x, {3, 4}); });
  s.unary("permute", random_tensor(rng, {2, 3, 4}), [](const D& x) { return permute(x, {2, 0, 1}); });
  s.unary("slice", random_tensor(rng, {3, 5}), [](const D& x) { return slice(x, 1, 1, 4); });
  s.binary("concat", random_tensor(rng, {2, 3}), random_tensor(rng, {2, 2}),
           [](const D& a, const D& b) { return concat<double>({a, b}, 1); });
  s.unary("l2_normalize", random_tensor(rng, {2, 3, 4}), [](const D& x) { return l2_normalize(x, 1e-12, 2); });
  s.unary("map_norm", random_tensor(rng, {2, 3, 4}), [](const D& x) { return map_norm(x, 2); });
  {
    const std::vector<int> labels = {1, 0, 3};
    s.unary("cross_entropy", random_tensor(rng, {3, 4}), [labels](const D& x) { return scale(cross_entropy(x, labels), 1.0); });
  }
  {
    LinkWeights<double> links = init_links<double>(3, 4, rng);
    for (auto& v : links.b.data()) v = rng.uniform(-0.5, 0.5);
    const D maps = random_tensor(rng, {2, 4, 3, 3}, 0.0, 1.0);
    const D r = random_tensor(rng, {2, 3, 3, 3});
    s.reports.push_back(gradcheck("augment", [=] { return project(augment(maps, links), r); },
                                  {{"maps", maps}, {"W", links.W}, {"b", links.b}}, options));
  }
  {
    const D acts = random_tensor(rng, {2, 3, 3, 3});
    s.unary("attention_loss", random_tensor(rng, {2, 3, 3, 3}),
            [acts](const D& aug) { return scale(attention_loss(aug, acts), 1.0); });
  }
  {
    const D teacher_logits = random_tensor(rng, {3, 4});
    s.unary("hard_distill", random_tensor(rng, {3, 4}),
            [teacher_logits](const D& x) { return scale(hard_distill_loss(x, teacher_logits), 1.0); });
  }
  {
    Rng model_rng(rng.next());
    const Student<double> student(toy_student(), model_rng);
    const D images = random_tensor(rng, {2, 3, 8, 8}, 0.0, 1.0);
    const D r = random_tensor(rng, {2, 3});
    s.reports.push_back(gradcheck("student_logits", [=] { return project(student.forward(images).logits, r); },
                                  student.parameters(), options));
  }
  s.reports.push_back(gradcheck_objective(rng.next(), options));
  return s.reports;
}

}  // namespace aal
