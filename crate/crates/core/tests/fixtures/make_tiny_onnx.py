"""Writes tiny_binary.onnx: a 1x1 convolution over a (1,3,8,8) input with two
output channels. Channel 0 is the constant 0.5, channel 1 is the red channel,
so after softmax the billboard probability is >= 0.5 iff red >= 0.5."""
import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper

weight = np.zeros((2, 3, 1, 1), dtype=np.float32)
weight[1, 0, 0, 0] = 1.0
bias = np.array([0.5, 0.0], dtype=np.float32)

node = helper.make_node("Conv", ["input", "W", "B"], ["scores"], kernel_shape=[1, 1])
graph = helper.make_graph(
    [node],
    "tiny_binary",
    [helper.make_tensor_value_info("input", TensorProto.FLOAT, [1, 3, 8, 8])],
    [helper.make_tensor_value_info("scores", TensorProto.FLOAT, [1, 2, 8, 8])],
    initializer=[numpy_helper.from_array(weight, "W"), numpy_helper.from_array(bias, "B")],
)
model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
model.ir_version = 8
onnx.checker.check_model(model)
onnx.save(model, "tiny_binary.onnx")
