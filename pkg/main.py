import logging

import uvicorn

from app import config
from app.api import app

if __name__ == "__main__":
    logging.basicConfig(level=config.LOG_LEVEL, format="%(levelname)s %(name)s %(message)s")
    uvicorn.run(app, host="0.0.0.0", port=8000)
