from config import run_analysis, upload_results


if __name__ == "__main__":
    report, output_dir = run_analysis()
    upload_results(output_dir)
