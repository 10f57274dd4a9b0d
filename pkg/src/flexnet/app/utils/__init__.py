"""
Utils package

Import modules directly:
- from flexnet.app.utils.model_io import load_model, write_csv
- from flexnet.app.utils.sampling import sample_models
"""
