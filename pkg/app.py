import logging
import uuid
from io import BytesIO
from typing import Dict, Optional

import numpy as np
import uvicorn
from fastapi import FastAPI, File, Form, HTTPException, Query, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response

from boosting import BoostedModel, FitConfig, dumps_model, fit, predict
from config import configure_logging
from datagen import loss_for, named_simspec, simulate
from dataset import Dataset, default_loss, ingest_csv, prediction_frame
from exceptions import TriboostError
from losses import LossSpec

logger = logging.getLogger(__name__)

app = FastAPI(title="triboost")

# Enable CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["*"],
    allow_headers=["*"],
)

# In-memory session stores
dataset_store: Dict[str, Dataset] = {}
loss_store: Dict[str, LossSpec] = {}
model_store: Dict[str, BoostedModel] = {}


def _dataset_summary(session_id: str, dataset: Dataset):
    head = dataset.to_frame().head(5)
    return {
        "session_id": session_id,
        "dataframe": head.to_dict(orient="records"),
        "columns": head.columns.tolist(),
        "shape": [dataset.n_rows, dataset.n_features],
    }


def _get_dataset(session_id: str) -> Dataset:
    dataset = dataset_store.get(session_id)
    if dataset is None:
        raise HTTPException(status_code=400, detail="No dataset found for this session.")
    return dataset


def _get_model(session_id: str) -> BoostedModel:
    model = model_store.get(session_id)
    if model is None:
        raise HTTPException(status_code=400, detail="No model fitted for this session.")
    return model


@app.post("/dataset/simulate")
async def simulate_api(
    name: str = Form(...),
    n: int = Form(1000),
    seed: int = Form(0),
):
    try:
        dataset = simulate(named_simspec(name, n, seed))
    except TriboostError as e:
        raise HTTPException(status_code=400, detail=str(e))

    session_id = uuid.uuid4().hex
    dataset_store[session_id] = dataset
    loss_store[session_id] = loss_for(dataset)
    logger.info("Session %s: simulated %s with n=%d", session_id, name, n)
    return _dataset_summary(session_id, dataset)


@app.post("/dataset/upload")
async def upload_api(
    file: UploadFile = File(...),
    target: str = Form("y"),
    one_hot: bool = Form(False),
):
    contents = await file.read()
    try:
        dataset = ingest_csv(BytesIO(contents), target, one_hot=one_hot)
    except TriboostError as e:
        raise HTTPException(status_code=400, detail=str(e))

    session_id = uuid.uuid4().hex
    dataset_store[session_id] = dataset
    logger.info("Session %s: uploaded %s", session_id, file.filename)
    return _dataset_summary(session_id, dataset)


@app.post("/model/fit")
async def fit_api(
    session_id: str = Form(...),
    loss: Optional[str] = Form(None),
    mode: str = Form("newton"),
    iterations: int = Form(100),
    learning_rate: float = Form(0.1),
    max_depth: int = Form(5),
    min_leaf: float = Form(1.0),
    constraint: Optional[str] = Form(None),
    num_classes: Optional[int] = Form(None),
    y_lower: Optional[float] = Form(None),
    y_upper: Optional[float] = Form(None),
):
    dataset = _get_dataset(session_id)
    try:
        if loss is not None:
            loss_spec = default_loss(dataset, loss, num_classes=num_classes, y_lower=y_lower, y_upper=y_upper)
        elif session_id in loss_store:
            loss_spec = loss_store[session_id]
        else:
            raise HTTPException(status_code=400, detail="A loss family is required for uploaded data.")
        config = FitConfig.for_mode(
            mode,
            num_iterations=iterations,
            learning_rate=learning_rate,
            max_depth=max_depth,
            min_per_leaf=min_leaf,
            leaf_constraint=constraint,
        )
        model = fit(dataset, loss_spec, config)
    except (TriboostError, ValueError) as e:
        raise HTTPException(status_code=400, detail=str(e))

    loss_store[session_id] = loss_spec
    model_store[session_id] = model
    return {
        "session_id": session_id,
        "loss": loss_spec.to_dict(),
        "config": config.to_dict(),
        "f0": model.f0.tolist(),
        "n_iterations": model.n_iterations,
        "train_loss": float(model.train_loss[-1] / dataset.n_rows),
    }


@app.get("/model/predict")
async def predict_api(session_id: str = Query(...), upto: Optional[int] = Query(None)):
    dataset = _get_dataset(session_id)
    model = _get_model(session_id)
    try:
        scores = predict(model, dataset.features, upto=upto)
    except TriboostError as e:
        raise HTTPException(status_code=400, detail=str(e))
    frame = prediction_frame(model.loss, scores)
    return {
        "session_id": session_id,
        "columns": frame.columns.tolist(),
        "predictions": frame.to_dict(orient="records"),
    }


@app.get("/model/trace")
async def trace_api(session_id: str = Query(...)):
    dataset = _get_dataset(session_id)
    model = _get_model(session_id)
    per_obs = model.train_loss / dataset.n_rows
    return {
        "session_id": session_id,
        "iteration": np.arange(1, model.n_iterations + 1).tolist(),
        "train_loss": per_obs.tolist(),
    }


@app.get("/model/download")
async def download_api(session_id: str = Query(...)):
    model = _get_model(session_id)
    return Response(
        content=dumps_model(model),
        media_type="application/json",
        headers={"Content-Disposition": f"attachment; filename=model_{session_id}.json"},
    )


if __name__ == "__main__":
    configure_logging(0)
    uvicorn.run(app, host="0.0.0.0", port=8000)
