#include "hop/layers.hpp"

#include <cmath>

#include "hop/kernels.hpp"

namespace hop {
namespace {

template <typename T>
BasicMatrix<T> fan_in_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  BasicMatrix<T> m(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  for (T& v : m.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return m;
}

template <typename T>
BasicMatrix<T> zeros_shaped(const BasicMatrix<T>& m) {
  return BasicMatrix<T>(m.rows(), m.cols());
}

template <typename T>
BasicMatrix<T> affine(const BasicMatrix<T>& x, const BasicMatrix<T>& w, const BasicMatrix<T>& b) {
  BasicMatrix<T> out = kernels::matmul(x, w);
  kernels::add_row_bias(out, b.values());
  return out;
}

}  // namespace

template <typename T>
AdapterParams<T> AdapterParams<T>::initial(std::size_t channels, std::size_t bottleneck,
                                           Rng& rng) {
  require(channels >= 1 && bottleneck >= 1, ErrorKind::kConfig,
          "adapter needs positive channel and bottleneck sizes");
  return {fan_in_uniform<T>(channels, bottleneck, rng), BasicMatrix<T>(1, bottleneck),
          BasicMatrix<T>(bottleneck, channels), BasicMatrix<T>(1, channels)};
}

template <typename T>
AdapterParams<T> AdapterParams<T>::zeros_like(const AdapterParams& o) {
  return {zeros_shaped(o.w_down), zeros_shaped(o.b_down), zeros_shaped(o.w_up),
          zeros_shaped(o.b_up)};
}

template <typename T>
HeadParams<T> HeadParams<T>::initial(std::size_t input_width, std::size_t classes, Rng& rng) {
  require(input_width >= 1 && classes >= 1, ErrorKind::kConfig,
          "head needs positive input width and class count");
  HeadParams h;
  h.w1 = fan_in_uniform<T>(input_width, input_width, rng);
  h.b1 = BasicMatrix<T>(1, input_width);
  h.w2 = fan_in_uniform<T>(input_width, classes, rng);
  h.b2 = BasicMatrix<T>(1, classes);
  return h;
}

template <typename T>
HeadParams<T> HeadParams<T>::zeros_like(const HeadParams& o) {
  return {zeros_shaped(o.w1), zeros_shaped(o.b1), zeros_shaped(o.w2), zeros_shaped(o.b2)};
}

template <typename T>
BasicMatrix<T> adapter_forward(const AdapterParams<T>& params, const BasicMatrix<T>& tokens,
                               AdapterCache<T>* cache) {
  require(tokens.cols() == params.channels(), ErrorKind::kShape,
          "adapter expects " + std::to_string(params.channels()) + " channels, got " +
              std::to_string(tokens.cols()));
  BasicMatrix<T> pre = affine(tokens, params.w_down, params.b_down);
  BasicMatrix<T> hidden = relu_forward(pre);
  BasicMatrix<T> out = affine(hidden, params.w_up, params.b_up);
  auto o = out.values();
  auto x = tokens.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += x[i];
  if (cache) *cache = {tokens, std::move(pre), std::move(hidden)};
  return out;
}

template <typename T>
AdapterParams<T> adapter_backward(const AdapterParams<T>& params, const AdapterCache<T>& cache,
                                  const BasicMatrix<T>& grad_out) {
  AdapterParams<T> g;
  g.w_up = kernels::matmul_tn(cache.hidden, grad_out);
  g.b_up = kernels::column_sums(grad_out);
  BasicMatrix<T> grad_hidden = kernels::matmul_nt(grad_out, params.w_up);
  BasicMatrix<T> grad_pre = relu_backward(cache.pre, grad_hidden);
  g.w_down = kernels::matmul_tn(cache.input, grad_pre);
  g.b_down = kernels::column_sums(grad_pre);
  return g;
}

template <typename T>
BasicMatrix<T> head_forward(const HeadParams<T>& params, const BasicMatrix<T>& features,
                            HeadCache<T>* cache) {
  require(features.cols() == params.input_width(), ErrorKind::kShape,
          "head expects width " + std::to_string(params.input_width()) + ", got " +
              std::to_string(features.cols()));
  BasicMatrix<T> pre = affine(features, params.w1, params.b1);
  BasicMatrix<T> hidden = relu_forward(pre);
  BasicMatrix<T> logits = affine(hidden, params.w2, params.b2);
  if (cache) *cache = {features, std::move(pre), std::move(hidden)};
  return logits;
}

template <typename T>
HeadGradients<T> head_backward(const HeadParams<T>& params, const HeadCache<T>& cache,
                               const BasicMatrix<T>& grad_logits) {
  HeadGradients<T> g;
  g.params.w2 = kernels::matmul_tn(cache.hidden, grad_logits);
  g.params.b2 = kernels::column_sums(grad_logits);
  BasicMatrix<T> grad_hidden = kernels::matmul_nt(grad_logits, params.w2);
  BasicMatrix<T> grad_pre = relu_backward(cache.pre, grad_hidden);
  g.params.w1 = kernels::matmul_tn(cache.input, grad_pre);
  g.params.b1 = kernels::column_sums(grad_pre);
  g.input = kernels::matmul_nt(grad_pre, params.w1);
  return g;
}

template <typename T>
BasicMatrix<T> pipeline_logits(const Pipeline<T>& pipe, const TokenBatch<T>& batch) {
  const BasicMatrix<T> adapted =
      pipe.adapter ? adapter_forward(*pipe.adapter, batch.tokens) : batch.tokens;
  return head_forward(*pipe.head, pool_batch(adapted, batch.layout, pipe.pooling));
}

namespace {

template <typename T>
struct ForwardTrace {
  AdapterCache<T> adapter;
  BasicMatrix<T> adapted;
  DropoutMask mask;
  HeadCache<T> head;
  BasicMatrix<T> logits;
};

template <typename T>
ForwardTrace<T> traced_forward(const Pipeline<T>& pipe, const TokenBatch<T>& batch, Rng& rng) {
  ForwardTrace<T> t;
  t.adapted = pipe.adapter ? adapter_forward(*pipe.adapter, batch.tokens, &t.adapter)
                           : batch.tokens;
  BasicMatrix<T> pooled = pool_batch(t.adapted, batch.layout, pipe.pooling);
  auto dropped = dropout(pooled, pipe.dropout, rng, /*training=*/true);
  t.mask = std::move(dropped.mask);
  t.logits = head_forward(*pipe.head, dropped.out, &t.head);
  return t;
}

}  // namespace

template <typename T>
PipelineGradients<T> pipeline_gradients(const Pipeline<T>& pipe, const TokenBatch<T>& batch,
                                        Rng& rng) {
  ForwardTrace<T> t = traced_forward(pipe, batch, rng);
  auto ce = softmax_cross_entropy(t.logits, batch.labels);
  PipelineGradients<T> out;
  out.loss = ce.loss;
  HeadGradients<T> hg = head_backward(*pipe.head, t.head, ce.grad);
  out.head = std::move(hg.params);
  if (pipe.adapter) {
    BasicMatrix<T> grad_pooled = dropout_backward(hg.input, t.mask, pipe.dropout);
    BasicMatrix<T> grad_tokens =
        pool_batch_backward(t.adapted, batch.layout, pipe.pooling, grad_pooled);
    out.adapter = adapter_backward(*pipe.adapter, t.adapter, grad_tokens);
  }
  return out;
}

template <typename T>
double pipeline_loss(const Pipeline<T>& pipe, const TokenBatch<T>& batch, Rng& rng) {
  ForwardTrace<T> t = traced_forward(pipe, batch, rng);
  return cross_entropy_loss(t.logits, batch.labels);
}

#define HOP_INSTANTIATE_LAYERS(T)                                                          \
  template struct AdapterParams<T>;                                                        \
  template struct HeadParams<T>;                                                           \
  template BasicMatrix<T> adapter_forward(const AdapterParams<T>&, const BasicMatrix<T>&,  \
                                          AdapterCache<T>*);                               \
  template AdapterParams<T> adapter_backward(const AdapterParams<T>&,                      \
                                             const AdapterCache<T>&, const BasicMatrix<T>&); \
  template BasicMatrix<T> head_forward(const HeadParams<T>&, const BasicMatrix<T>&,        \
                                       HeadCache<T>*);                                     \
  template HeadGradients<T> head_backward(const HeadParams<T>&, const HeadCache<T>&,       \
                                          const BasicMatrix<T>&);                          \
  template BasicMatrix<T> pipeline_logits(const Pipeline<T>&, const TokenBatch<T>&);       \
  template PipelineGradients<T> pipeline_gradients(const Pipeline<T>&,                     \
                                                   const TokenBatch<T>&, Rng&);            \
  template double pipeline_loss(const Pipeline<T>&, const TokenBatch<T>&, Rng&);

HOP_INSTANTIATE_LAYERS(float)
HOP_INSTANTIATE_LAYERS(double)

}  // namespace hop
