from . import config as config, context as context, errors as errors, formats as formats
