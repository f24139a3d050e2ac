"""Tiny thermal object detector toolkit.

Self-contained: tensor kernels, the nano detection topology, letterbox and
augmentation preprocessing, auto-anchor, decode + NMS, mAP evaluation,
int8 post-training quantization, and a latency harness.
"""

from .anchors import AnchorFitReport, AnchorSet, anchor_fit, autoanchor, default_anchors, kmeans_anchors
from .bench import BenchStats, bench_forward, bench_pipeline
from .evaluate import EvalReport, average_precision, evaluate, match_detections, write_report
from .graph import ModelGraph, build_yolov5n, count_params, zero_weights
from .imaging import (
    Frame,
    LabelBox,
    LetterboxMap,
    augment,
    letterbox,
    load_frame,
    read_labels,
    split_dataset,
    write_labels,
)
from .kernels import (
    activation,
    concat_channels,
    conv2d,
    fold_batchnorm,
    maxpool2d,
    upsample_nearest2x,
)
from .modelio import ModelFormatError, load_model, save_model
from .optim import SGD, Adam, AdamW
from .postprocess import Detection, Detections, decode_head, iou, nms, postprocess_pipeline
from .quantize import (
    CalibrationStats,
    QuantizedModel,
    calibrate,
    dequantize,
    load_quantized,
    qconv2d,
    quantize_model,
    quantize_tensor,
    quantized_forward,
    save_quantized,
)
from .tensor import BatchNorm, ConvSpec, QuantParams, Tensor

__version__ = "0.1.0"
